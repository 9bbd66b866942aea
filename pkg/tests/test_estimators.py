import networkx as nx
import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from modrecon import ModularityCommunities, ModularityEmbedding, check_graph, nmi

from conftest import two_triangles


def test_check_graph_inputs():
    g = two_triangles()
    A = g.adjacency.toarray()
    assert check_graph(A).total_edges == 6
    assert check_graph(g.adjacency).total_edges == 6
    assert check_graph(nx.karate_club_graph()).n_nodes == 34
    assert check_graph(g, features=np.ones((6, 2))).n_features == 2


@pytest.mark.parametrize("bad", [np.zeros((3, 4)), np.triu(np.ones((3, 3)), 1), np.zeros((3, 3))])
def test_check_graph_rejects(bad):
    with pytest.raises(ValueError):
        check_graph(bad)


def test_check_graph_rejects_directed_and_bad_features():
    with pytest.raises(ValueError):
        check_graph(nx.DiGraph([(0, 1)]))
    with pytest.raises(ValueError):
        check_graph(two_triangles(), features=np.ones((5, 2)))
    with pytest.raises(ValueError):
        check_graph(two_triangles(), features=np.full((6, 1), np.nan))


def test_params_round_trip():
    est = ModularityEmbedding(method="onestage", layer_dims=(8, 4), epochs=3)
    p = est.get_params()
    assert p["method"] == "onestage" and p["layer_dims"] == (8, 4)
    assert clone(est).get_params() == p
    est.set_params(epochs=9)
    assert est.epochs == 9
    outer = ModularityCommunities(n_communities=2, embedding=est)
    assert outer.get_params()["embedding__epochs"] == 9


@pytest.mark.parametrize("method", ["twostage", "onestage", "gae"])
def test_embedding_fit_transform(karate, method):
    est = ModularityEmbedding(method=method, layer_dims=(8, 4), epochs=5)
    Z = est.fit_transform(karate)
    assert Z.shape == (34, 4) and np.isfinite(Z).all()
    assert np.array_equal(est.transform(), Z)
    with pytest.raises(ValueError):
        est.transform(two_triangles())


def test_unknown_method(karate):
    with pytest.raises(ValueError):
        ModularityEmbedding(method="spectral").fit(karate)


def test_not_fitted():
    with pytest.raises(NotFittedError):
        ModularityEmbedding().transform()
    with pytest.raises(NotFittedError):
        ModularityCommunities().predict()


def test_communities_two_triangles():
    emb = ModularityEmbedding(layer_dims=(4,), neighbor_samples=2, epochs=100)
    est = ModularityCommunities(k_range=(2, 4), embedding=emb).fit(two_triangles())
    assert nmi(est.predict(), [0, 0, 0, 1, 1, 1]) == 1.0
    assert est.modularity_ == pytest.approx(0.5)
    assert [r["k"] for r in est.sweep_table_] == [2, 3, 4]
    assert np.array_equal(est.fit_predict(two_triangles()), est.labels_)


def test_predict_new_nodes():
    emb = ModularityEmbedding(layer_dims=(4,), neighbor_samples=2, epochs=100)
    est = ModularityCommunities(n_communities=2, embedding=emb).fit(two_triangles())
    pred = est.predict_new_nodes([[0, 1], [4, 5]])
    assert pred[0] == est.labels_[0] and pred[1] == est.labels_[4]
    assert est.predict_new_nodes([[0, 1]], variant="plain")[0] == est.labels_[0]
    with pytest.raises(ValueError):
        est.predict_new_nodes([[0]], variant="other")


def test_new_nodes_need_twostage(karate):
    est = ModularityCommunities(n_communities=2, embedding=ModularityEmbedding(method="gae", layer_dims=(8, 4),
                                                                            epochs=2)).fit(karate)
    with pytest.raises(ValueError):
        est.predict_new_nodes([[0]])
