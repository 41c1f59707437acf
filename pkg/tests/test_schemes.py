import numpy as np
import pytest

from ternary_gsp.errors import DegenerateNeighborhoodError, GeometryError, UnsupportedGraphError
from ternary_gsp.graph_core import Graph, normalized_adjacency
from ternary_gsp.layout import theta_from_matrices, to_channel_major
from ternary_gsp.rng import XorShift64Star
from ternary_gsp.schemes import (
    GatParams,
    SchemeSpec,
    attention_coefficients,
    attention_support,
    build_chebnet_scheme,
    build_conv1d_scheme,
    build_fc_scheme,
    build_gat_scheme,
    build_gcn_scheme,
    build_tagcn_scheme,
    signal_digest,
)
from ternary_gsp.tensor_core import TernaryLayer, ternary_forward
from ternary_gsp.verify import TrialConfig, check_equivalence, random_graph, suite_configs
from ternary_gsp import reference as ref

P2 = Graph(2, ((0, 1),))


def dense(s):
    return s.to_dense()


class TestFc:
    def test_single(self):
        s, spec = build_fc_scheme(1, 1)
        assert spec.k_params == 1
        assert s.entries == [(0, 0, 0, 1.0)]

    def test_two_by_two(self):
        s, spec = build_fc_scheme(2, 2)
        assert spec.k_params == 4
        d = dense(s)
        assert d[3, 1, 1] == 1.0 and d[3].sum() == 1.0

    def test_one_hot_cover(self):
        s, _ = build_fc_scheme(3, 5)
        d = dense(s)
        assert np.all((d != 0).sum(axis=(1, 2)) == 1)
        assert np.all(d.sum(axis=0) == 1.0)

    def test_reproduces_matrix_product(self):
        rng = XorShift64Star(3)
        w = rng.uniform_array((4, 3))
        x = rng.uniform_array((2, 3))
        s, _ = build_fc_scheme(3, 4)
        y = ternary_forward(TernaryLayer(w.reshape(1, 1, -1), s), x[:, None, :]).array
        assert np.array_equal(y[:, 0], ref.fc_ref(w, x))

    def test_zero_extent(self):
        with pytest.raises(ValueError):
            build_fc_scheme(0, 2)


class TestConv1d:
    def test_i4_k2(self):
        s, spec = build_conv1d_scheme(4, 2)
        assert (spec.k_params, spec.j_out) == (2, 3)
        assert [e[:3] for e in s.entries if e[0] == 0] == [(0, 0, 0), (0, 1, 1), (0, 2, 2)]
        assert [e[:3] for e in s.entries if e[0] == 1] == [(1, 0, 1), (1, 1, 2), (1, 2, 3)]

    def test_pointwise(self):
        s, _ = build_conv1d_scheme(5, 1)
        assert np.array_equal(dense(s)[0], np.eye(5))

    def test_k_independent_of_input(self):
        assert {build_conv1d_scheme(n, 3)[1].k_params for n in (4, 8, 16, 64)} == {3}

    def test_stride_and_padding(self):
        s, spec = build_conv1d_scheme(5, 3, stride=2, padding=1)
        assert spec.j_out == 3
        d = dense(s)
        # j=0 sees padded positions -1, 0, 1
        assert d[0, 0].sum() == 0 and d[1, 0, 0] == 1 and d[2, 0, 1] == 1
        assert spec.metadata == {"kernel": 3, "stride": 2, "padding": 1}

    def test_geometry_error(self):
        with pytest.raises(GeometryError):
            build_conv1d_scheme(2, 3)


class TestChebnet:
    def test_c1_identity(self):
        for variant in ("faithful", "collapsed"):
            s, spec = build_chebnet_scheme(P2, 1, variant=variant)
            assert spec.k_params == 1
            assert np.array_equal(dense(s)[0], np.eye(2))

    def test_p2_c2(self):
        s, spec = build_chebnet_scheme(P2, 2)
        assert spec.k_params == 2
        assert spec.metadata["lambda_max"] == pytest.approx(2.0, abs=1e-12)
        assert np.allclose(dense(s)[1], [[0, -1], [-1, 0]], atol=1e-12)

    def test_collapsed_sums_orders(self):
        g = random_graph(6, 0.5, 1)
        faithful, _ = build_chebnet_scheme(g, 4)
        collapsed, spec = build_chebnet_scheme(g, 4, variant="collapsed")
        assert spec.k_params == 1
        assert np.allclose(dense(collapsed)[0], dense(faithful).sum(axis=0), atol=1e-12)

    def test_collapsed_matches_equal_thetas(self):
        g = random_graph(7, 0.4, 2)
        rng = XorShift64Star(5)
        x = rng.uniform_array((2, 3, 7))
        t = rng.uniform_array((2, 3))
        s_f, _ = build_chebnet_scheme(g, 3)
        s_c, _ = build_chebnet_scheme(g, 3, variant="collapsed")
        y_f = ternary_forward(TernaryLayer(np.repeat(t[:, :, None], 3, axis=2), s_f), x).array
        y_c = ternary_forward(TernaryLayer(t[:, :, None], s_c), x).array
        assert np.max(np.abs(y_f - y_c)) <= 1e-10

    def test_s0_identity_always(self):
        for seed in range(5):
            g = random_graph(8, 0.3, seed)
            s, _ = build_chebnet_scheme(g, 3, rescale_mode="paper")
            assert np.array_equal(dense(s)[0], np.eye(8))

    def test_directed(self):
        with pytest.raises(UnsupportedGraphError):
            build_chebnet_scheme(Graph(2, ((0, 1),), directed=True), 2)


class TestGcnTagcn:
    def test_single_vertex(self):
        s, _ = build_gcn_scheme(Graph(1))
        assert s.entries == [(0, 0, 0, 1.0)]

    def test_p2(self):
        s, spec = build_gcn_scheme(P2)
        assert spec.k_params == 1
        assert np.array_equal(dense(s)[0], np.full((2, 2), 0.5))

    def test_pattern_matches_a_hat(self):
        g = random_graph(9, 0.3, 4)
        s, _ = build_gcn_scheme(g)
        pattern = (g.adjacency() + np.eye(9)) != 0
        assert np.array_equal(dense(s)[0] != 0, pattern)

    def test_tagcn_c1_is_gcn(self):
        g = random_graph(7, 0.4, 8)
        t, _ = build_tagcn_scheme(g, 1)
        c, _ = build_gcn_scheme(g)
        assert np.allclose(dense(t), dense(c), atol=1e-15)

    def test_tagcn_p2(self):
        s, spec = build_tagcn_scheme(P2, 2)
        assert spec.k_params == 2
        assert np.allclose(dense(s), np.full((2, 2, 2), 0.5), atol=1e-15)

    def test_tagcn_patterns_nested(self):
        g = random_graph(10, 0.2, 6)
        s, _ = build_tagcn_scheme(g, 4)
        a_hat = (g.adjacency() + np.eye(10)) != 0
        reach = np.eye(10, dtype=bool)
        for k, slice_ in enumerate(dense(s)):
            reach = (reach.astype(int) @ a_hat.astype(int)) != 0
            assert not np.any((slice_ != 0) & ~reach), k

    def test_symmetric(self):
        g = random_graph(12, 0.3, 9)
        for s in (build_gcn_scheme(g)[0], build_tagcn_scheme(g, 3)[0]):
            d = dense(s)
            assert np.max(np.abs(d - d.transpose(0, 2, 1))) <= 1e-12

    def test_directed(self):
        g = Graph(3, ((0, 1), (1, 2)), directed=True)
        for build in (build_gcn_scheme, lambda g: build_tagcn_scheme(g, 2)):
            with pytest.raises(UnsupportedGraphError):
                build(g)


def gat_instance(n=8, p=3, q=2, heads=2, seed=0, **kw):
    rng = XorShift64Star(seed)
    g = random_graph(n, 0.35, seed)
    params = GatParams(rng.uniform_array((heads, p, q)), rng.uniform_array((heads, 2 * q)), **kw)
    return g, params, rng.uniform_array((p, n))


class TestGat:
    def test_rows_sum_to_one_on_support(self):
        for seed in range(10):
            g, params, x = gat_instance(seed=seed)
            support = attention_support(g)
            for alpha in attention_coefficients(g, params, x):
                assert np.max(np.abs(alpha.sum(axis=1) - 1.0)) <= 1e-12
                for j, nbrs in enumerate(support):
                    outside = np.ones(g.n_vertices, bool)
                    outside[nbrs] = False
                    assert np.all(alpha[j, outside] == 0)

    def test_singleton_neighborhood(self):
        g, params, x = gat_instance(n=3, seed=1)
        alpha = attention_coefficients(Graph(3), params, x)[0]
        assert np.array_equal(alpha, np.eye(3))

    def test_zero_attention_is_uniform(self):
        g = Graph(4, ((0, 1), (0, 2), (0, 3)))
        params = GatParams(np.ones((2, 1)), np.zeros(2))
        alpha = attention_coefficients(g, params, np.arange(8.0).reshape(2, 4))[0]
        assert np.allclose(alpha[0], 0.25, atol=1e-15)
        assert np.allclose(alpha[1], [0.5, 0.5, 0, 0], atol=1e-15)

    def test_degenerate_without_self(self):
        g = Graph(3, ((0, 1),))
        params = GatParams(np.ones((1, 1)), np.ones(2), include_self=False)
        with pytest.raises(DegenerateNeighborhoodError) as info:
            attention_coefficients(g, params, np.ones((1, 3)))
        assert info.value.vertices == [2]

    def test_concat_single_head_matches_average(self):
        g, params, x = gat_instance(heads=1, seed=2)
        (c, spec_c), = build_gat_scheme(g, params, x)
        (a, spec_a), = build_gat_scheme(g, GatParams(params.thetas, params.attention, mode="average"), x)
        assert c == a
        assert spec_c.k_params == spec_a.k_params == 1

    def test_concat_heads(self):
        g, params, x = gat_instance(heads=3, seed=3)
        built = build_gat_scheme(g, params, x)
        assert len(built) == 3
        assert [spec.metadata["head"] for _, spec in built] == [0, 1, 2]
        assert all(spec.k_params == 1 for _, spec in built)
        assert built[0][1].input_digest == signal_digest(x)

    def test_average_heads(self):
        g, params, x = gat_instance(heads=3, seed=4, mode="average")
        (s, spec), = build_gat_scheme(g, params, x)
        assert spec.k_params == 3
        alphas = attention_coefficients(g, params, x)
        assert np.allclose(dense(s), np.stack(alphas) / 3, atol=1e-15)

    def test_identical_heads_average_equals_single(self):
        g, one, x = gat_instance(heads=1, seed=5)
        two = GatParams(np.repeat(one.thetas, 2, axis=0), np.repeat(one.attention, 2, axis=0), mode="average")
        (s1, _), = build_gat_scheme(g, one, x)
        (s2, _), = build_gat_scheme(g, two, x)
        d2 = dense(s2)
        assert np.array_equal(d2[0], d2[1])
        assert np.allclose(d2[0], dense(s1)[0] / 2, atol=1e-16)
        y1 = ternary_forward(TernaryLayer(theta_from_matrices(one.thetas), s1), x[None]).array
        y2 = ternary_forward(TernaryLayer(theta_from_matrices(two.thetas), s2), x[None]).array
        assert np.max(np.abs(y1 - y2)) <= 1e-10

    def test_concat_matches_oracle_per_head(self):
        g, params, x = gat_instance(heads=2, seed=6)
        expected = ref.gat_ref(g, params, x.T)
        q = params.q_features
        for h, (s, _) in enumerate(build_gat_scheme(g, params, x)):
            y = ternary_forward(TernaryLayer(theta_from_matrices(params.thetas[h]), s), x[None]).array
            assert np.max(np.abs(y[0].T - expected[:, h * q : (h + 1) * q])) <= 1e-10

    def test_slope_matters(self):
        g, params, x = gat_instance(seed=7)
        other = GatParams(params.thetas, params.attention, leaky_slope=0.5)
        a = attention_coefficients(g, params, x)
        b = attention_coefficients(g, other, x)
        assert any(not np.allclose(u, v) for u, v in zip(a, b))

    def test_directed(self):
        g, params, x = gat_instance(n=2)
        with pytest.raises(UnsupportedGraphError):
            attention_coefficients(Graph(2, ((0, 1),), directed=True), params, x)


class TestSpec:
    def test_dict_round_trip(self):
        spec = SchemeSpec("conv1d", 2, 3, 4, {"kernel": 2}, "sha256:00")
        assert SchemeSpec.from_dict(spec.to_dict()) == spec

    def test_digest_omitted(self):
        assert "input_digest" not in build_fc_scheme(2, 2)[1].to_dict()

    def test_check(self):
        s, spec = build_fc_scheme(2, 3)
        spec.check(s)
        with pytest.raises(ValueError):
            SchemeSpec("fc", 5, 3, 2).check(s)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            SchemeSpec("rnn", 1, 1, 1)


@pytest.mark.parametrize("model", ["fc", "conv1d", "chebnet", "gcn", "gat", "tagcn"])
def test_oracle_equivalence_larger_extents(model):
    base = TrialConfig(
        model=model, trials=4, n_range=(1, 32), p_range=(1, 8), q_range=(1, 8), b_range=(1, 4), seed=7
    )
    for cfg in suite_configs(base, "all" if model == "gat" else model):
        if cfg.model != model:
            continue
        report = check_equivalence(cfg)
        assert report.passed, [t.to_dict() for t in report.failures]


def test_gcn_ternary_on_channel_major_layout():
    g = random_graph(5, 0.5, 11)
    rng = XorShift64Star(11)
    theta = rng.uniform_array((3, 2))
    x_vm = rng.uniform_array((2, 5, 3))
    s, _ = build_gcn_scheme(g)
    y = ternary_forward(TernaryLayer(theta_from_matrices(theta), s), to_channel_major(x_vm)).array
    expected = np.stack([normalized_adjacency(g) @ xb @ theta for xb in x_vm])
    assert np.max(np.abs(y - to_channel_major(expected))) <= 1e-12
