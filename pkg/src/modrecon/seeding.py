"""Seed derivation: every random stream is keyed by (root seed, purpose tag, index)."""

import zlib

import numpy as np


def derive_seed(root, tag, index=0):
    return np.random.SeedSequence([int(root) & 0xFFFFFFFF, zlib.crc32(tag.encode()), int(index)])


def derive_rng(root, tag, index=0):
    return np.random.default_rng(derive_seed(root, tag, index))
