import math
from pathlib import Path

import numpy as np
import pytest

from mceuler.coeffs import CoefficientSet, linear_map
from mceuler.euler import NoiseStream, TimeGrid
from mceuler.growth import analytic_growth
from mceuler.mces import estimate_value
from mceuler.netexport import (
    AffineLayer,
    FrozenRealization,
    NetSpec,
    build_mces_network,
    collapse_identity_layers,
    count_bound,
    eval_network,
    freeze_realization,
    from_json,
    identity_layer,
    network_map,
    param_count,
    to_json,
)
from mceuler.perturb import PerturbedPair, perturbed_estimate

GOLDEN = Path(__file__).parent / "golden"


def _affine(weight, bias, active=False):
    weight = np.atleast_2d(np.asarray(weight, dtype=float))
    bias = np.atleast_1d(np.asarray(bias, dtype=float))
    return AffineLayer(weight, bias, np.full(bias.shape, active))


def _dims(d_in, d_out, depth, hidden):
    return (d_in,) + (hidden,) * (depth - 1) + (d_out,)


def _random_net(rng, dims, rho="tanh", scale=0.4, sparsity=0.0):
    layers = []
    for i, (a, b) in enumerate(zip(dims, dims[1:])):
        weight = scale * rng.standard_normal((a, b))
        bias = scale * rng.standard_normal(b)
        if sparsity:
            weight[rng.random((a, b)) < sparsity] = 0.0
            bias[rng.random(b) < sparsity] = 0.0
        hidden = i < len(dims) - 2
        layers.append(AffineLayer(weight, bias, np.full(b, hidden)))
    return NetSpec(tuple(layers), rho=rho)


def _zero_net(dims):
    layers = [
        AffineLayer(np.zeros((a, b)), np.zeros(b), np.zeros(b, dtype=bool))
        for a, b in zip(dims, dims[1:])
    ]
    return NetSpec(tuple(layers))


def _net_coeffs(fr):
    # Valid when the per-step networks are identical, as in these fixtures.
    return CoefficientSet(
        mu=network_map(fr.mu_nets[0]),
        sigma=network_map(fr.sigma_nets[0]),
        f=network_map(fr.f_net),
        g=network_map(fr.g_nets[0]),
        horizon_T=fr.horizon_T,
        dim_d=fr.state_dim,
        dim_o=fr.output_dim,
        sigma_shape=(fr.state_dim, fr.noise_dim),
    )


class TestNetSpec:
    def test_layer_rejects_mismatched_bias_and_tags(self):
        with pytest.raises(ValueError, match="match the output width"):
            AffineLayer(np.eye(2), np.zeros(3), np.zeros(2, dtype=bool))
        with pytest.raises(ValueError, match="match the output width"):
            AffineLayer(np.eye(2), np.zeros(2), np.zeros(3, dtype=bool))
        with pytest.raises(ValueError, match="must be a matrix"):
            AffineLayer(np.zeros(2), np.zeros(2), np.zeros(2, dtype=bool))

    def test_rejects_non_composing_layers(self):
        with pytest.raises(ValueError, match="do not compose"):
            NetSpec((_affine(np.ones((2, 3)), np.zeros(3)), _affine(np.ones((2, 1)), [0.0])))

    def test_rejects_unknown_rho(self):
        with pytest.raises(ValueError, match="unknown activation tag"):
            NetSpec((identity_layer(2),), rho="sigmoid")

    def test_dimension_properties(self):
        ns = _random_net(np.random.default_rng(0), (3, 5, 2))
        assert ns.depth == 2
        assert ns.input_dim == 3
        assert ns.output_dim == 2
        assert ns.layer_dims == (3, 5, 2)
        assert ns.architecture() == ((3, 5), (5, 2))


class TestEval:
    def test_single_affine_layer(self):
        w = np.array([[1.0, 2.0], [3.0, -1.0]])
        b = np.array([0.5, -0.25])
        ns = NetSpec((_affine(w, b),))
        x = np.array([2.0, -1.0])
        np.testing.assert_array_equal(eval_network(ns, x), x @ w + b)

    def test_tagged_nodes_only(self):
        # First node passes through tanh, second stays affine.
        layer = AffineLayer(np.eye(2), np.zeros(2), np.array([True, False]))
        ns = NetSpec((layer, identity_layer(2)), rho="tanh")
        out = eval_network(ns, np.array([0.3, 0.3]))
        assert out[0] == pytest.approx(math.tanh(0.3), rel=1e-15)
        assert out[1] == 0.3

    def test_batch_axes_pass_through(self):
        ns = _random_net(np.random.default_rng(1), (3, 4, 2))
        x = np.random.default_rng(2).standard_normal((5, 7, 3))
        out = eval_network(ns, x)
        assert out.shape == (5, 7, 2)
        np.testing.assert_allclose(out[2, 3], eval_network(ns, x[2, 3]), rtol=1e-14)

    def test_dimension_mismatch(self):
        ns = _random_net(np.random.default_rng(3), (3, 2))
        with pytest.raises(ValueError, match="trailing axis of size 3"):
            eval_network(ns, np.zeros(4))

    def test_all_identity_net_is_its_affine_product(self):
        rng = np.random.default_rng(4)
        ns = _random_net(rng, (2, 4, 3, 2), rho="identity", scale=0.7)
        ns = NetSpec(
            tuple(AffineLayer(l.weight, l.bias, np.zeros(l.out_dim, dtype=bool)) for l in ns.layers)
        )
        collapsed = collapse_identity_layers(ns)
        assert collapsed.depth == 1
        w = ns.layers[0].weight @ ns.layers[1].weight @ ns.layers[2].weight
        x = rng.standard_normal((10, 2))
        np.testing.assert_allclose(eval_network(ns, x), x @ w + collapsed.layers[0].bias, atol=1e-13)
        np.testing.assert_allclose(eval_network(collapsed, x), eval_network(ns, x), atol=1e-13)


class TestParamCount:
    def test_zero_network(self):
        assert param_count(_zero_net((3, 4, 2))) == 0

    def test_dense_2x2_with_bias(self):
        assert param_count(NetSpec((_affine(np.ones((2, 2)), [1.0, 1.0]),))) == 6

    def test_only_nonzero_entries_count(self):
        layer = _affine([[1.0, 0.0], [0.0, 2.0]], [0.0, 3.0])
        assert param_count(NetSpec((layer,))) == 3


class TestSerialization:
    def test_round_trip_is_exact(self):
        ns = _random_net(np.random.default_rng(5), (2, 4, 3), rho="tanh", sparsity=0.3)
        back = from_json(to_json(ns))
        assert back.rho == ns.rho
        assert back.architecture() == ns.architecture()
        for ours, theirs in zip(ns.layers, back.layers):
            np.testing.assert_array_equal(ours.weight, theirs.weight)
            np.testing.assert_array_equal(ours.bias, theirs.bias)
            np.testing.assert_array_equal(ours.activation, theirs.activation)
        x = np.random.default_rng(6).standard_normal((20, 2))
        np.testing.assert_array_equal(eval_network(back, x), eval_network(ns, x))

    def test_rejects_foreign_payload(self):
        with pytest.raises(ValueError, match="version-1 network payload"):
            from_json('{"format": "something-else", "version": 1, "layers": []}')

    def test_golden_relu_bend(self):
        # Frozen absolute-value net: relu(x) + relu(-x) - 1/4.
        ns = from_json((GOLDEN / "relu_bend.json").read_text())
        assert ns.rho == "relu"
        assert ns.depth == 2
        assert param_count(ns) == 5
        x = np.array([[0.5], [-2.0], [0.0]])
        np.testing.assert_array_equal(eval_network(ns, x), [[0.25], [1.75], [-0.25]])


class TestFrozenRealization:
    def test_increments_match_stream_bitwise(self):
        rng = np.random.default_rng(7)
        fr = freeze_realization(
            seed=11,
            M=3,
            N=4,
            horizon_T=2.0,
            f_net=_random_net(rng, (2, 1), rho="identity"),
            g_nets=_random_net(rng, (2, 1), rho="identity"),
            mu_nets=_random_net(rng, (2, 2), rho="identity"),
            sigma_nets=_random_net(rng, (2, 4), rho="identity"),
        )
        expected = math.sqrt(0.5) * NoiseStream(11).standard_normal_block(0, 3, 4, 2)
        np.testing.assert_array_equal(fr.increments, expected)
        assert fr.noise_dim == 2

    def test_rejects_depth_mismatch(self):
        rng = np.random.default_rng(8)
        with pytest.raises(ValueError, match="share one depth"):
            freeze_realization(
                seed=0,
                M=1,
                N=1,
                horizon_T=1.0,
                f_net=_random_net(rng, (1, 3, 1)),
                g_nets=_random_net(rng, (1, 1), rho="identity"),
                mu_nets=_random_net(rng, (1, 3, 1)),
                sigma_nets=_random_net(rng, (1, 3, 1)),
            )

    def test_rejects_architecture_drift_across_steps(self):
        rng = np.random.default_rng(9)
        g_nets = [_random_net(rng, (1, 3, 1)), _random_net(rng, (1, 4, 1))]
        with pytest.raises(ValueError, match="g architecture varies"):
            freeze_realization(
                seed=0,
                M=1,
                N=2,
                horizon_T=1.0,
                f_net=_random_net(rng, (1, 3, 1)),
                g_nets=g_nets,
                mu_nets=_random_net(rng, (1, 3, 1)),
                sigma_nets=_random_net(rng, (1, 3, 1)),
            )

    def test_rejects_tampered_increments(self):
        rng = np.random.default_rng(10)
        fr = freeze_realization(
            seed=3,
            M=2,
            N=2,
            horizon_T=1.0,
            f_net=_random_net(rng, (1, 1), rho="identity"),
            g_nets=_random_net(rng, (1, 1), rho="identity"),
            mu_nets=_random_net(rng, (1, 1), rho="identity"),
            sigma_nets=_random_net(rng, (1, 1), rho="identity"),
        )
        with pytest.raises(ValueError, match="do not reproduce"):
            FrozenRealization(
                seed=fr.seed,
                samples_M=fr.samples_M,
                steps_N=fr.steps_N,
                horizon_T=fr.horizon_T,
                increments=np.zeros_like(fr.increments),
                f_net=fr.f_net,
                g_nets=fr.g_nets,
                mu_nets=fr.mu_nets,
                sigma_nets=fr.sigma_nets,
            )

    def test_rejects_inconsistent_component_shapes(self):
        rng = np.random.default_rng(11)
        with pytest.raises(ValueError, match="mu network maps"):
            freeze_realization(
                seed=0,
                M=1,
                N=1,
                horizon_T=1.0,
                f_net=_random_net(rng, (2, 1), rho="identity"),
                g_nets=_random_net(rng, (2, 1), rho="identity"),
                mu_nets=_random_net(rng, (2, 3), rho="identity"),
                sigma_nets=_random_net(rng, (2, 2), rho="identity"),
                noise_dim=1,
            )


def _freeze_random(seed, rng, M, N, depth, d, o, q, rho, horizon=1.0, sparsity=0.0, scale=0.3):
    return freeze_realization(
        seed=seed,
        M=M,
        N=N,
        horizon_T=horizon,
        f_net=_random_net(rng, _dims(d, o, depth, d + 1), rho=rho, scale=scale, sparsity=sparsity),
        g_nets=_random_net(rng, _dims(d, o, depth, d + 2), rho=rho, scale=scale, sparsity=sparsity),
        mu_nets=_random_net(rng, _dims(d, d, depth, d + 1), rho=rho, scale=scale, sparsity=sparsity),
        sigma_nets=_random_net(
            rng, _dims(d, d * q, depth, d + 2), rho=rho, scale=scale, sparsity=sparsity
        ),
    )


class TestBuild:
    def test_single_sample_single_step_by_hand(self):
        a, c = 0.4, -0.1
        s, u = 0.3, 0.2
        g1, g0 = 1.5, 0.7
        w, b = 2.0, -0.5
        fr = freeze_realization(
            seed=21,
            M=1,
            N=1,
            horizon_T=1.0,
            f_net=NetSpec((_affine([[w]], [b]),)),
            g_nets=NetSpec((_affine([[g1]], [g0]),)),
            mu_nets=NetSpec((_affine([[a]], [c]),)),
            sigma_nets=NetSpec((_affine([[s]], [u]),)),
        )
        net = build_mces_network(fr)
        dw = fr.increments[0, 0, 0]
        x = 0.8
        e1 = x + (a * x + c) + (s * x + u) * dw
        expected = w * e1 + b + (g1 * x + g0)
        assert eval_network(net, np.array([x]))[0] == pytest.approx(expected, rel=1e-14)

    def test_zero_coefficients_reduce_to_payoff_average(self):
        # Frozen state: the path never leaves x, so the export is the
        # terminal payoff plus the step-weighted running payoffs at x.
        rng = np.random.default_rng(12)
        d, o, N = 2, 2, 4
        g_nets = [_random_net(rng, (d, o), rho="identity", scale=1.0) for _ in range(N)]
        f_net = NetSpec((_affine(np.eye(d), [0.25, -0.5]),))
        fr = freeze_realization(
            seed=5,
            M=3,
            N=N,
            horizon_T=2.0,
            f_net=f_net,
            g_nets=g_nets,
            mu_nets=_zero_net((d, d)),
            sigma_nets=_zero_net((d, d)),
        )
        net = build_mces_network(fr)
        x = rng.standard_normal((10, d))
        g_mean = np.mean([eval_network(g, x) for g in g_nets], axis=0)
        expected = eval_network(f_net, x) + fr.horizon_T * g_mean
        np.testing.assert_allclose(eval_network(net, x), expected, rtol=1e-13, atol=1e-13)

    def test_figure_topology_two_chains_three_blocks(self):
        rng = np.random.default_rng(13)
        d, o, q, D = 2, 1, 2, 2
        fr = freeze_realization(
            seed=1,
            M=2,
            N=3,
            horizon_T=1.0,
            f_net=_random_net(rng, (d, 3, o)),
            g_nets=_random_net(rng, (d, 3, o)),
            mu_nets=_random_net(rng, (d, 3, d)),
            sigma_nets=_random_net(rng, (d, 4, d * q)),
        )
        net = build_mces_network(fr)
        assert net.depth == (fr.steps_N + 1) * D
        # Two parallel chains: per step a wide subnet layer, then the
        # (state, accumulator) junction of width M*(d+o); the terminal
        # block narrows to the single averaged output.
        assert net.layer_dims == (2, 24, 6, 26, 6, 26, 6, 8, 1)
        assert net.rho == "tanh"

    def test_rejects_mixed_activation_tags(self):
        rng = np.random.default_rng(14)
        fr = freeze_realization(
            seed=2,
            M=1,
            N=1,
            horizon_T=1.0,
            f_net=_random_net(rng, (1, 2, 1), rho="tanh"),
            g_nets=_random_net(rng, (1, 2, 1), rho="relu"),
            mu_nets=_random_net(rng, (1, 2, 1), rho="tanh"),
            sigma_nets=_random_net(rng, (1, 2, 1), rho="tanh"),
        )
        with pytest.raises(ValueError, match="mix activation tags"):
            build_mces_network(fr)

    def test_collapse_keeps_export_output(self):
        rng = np.random.default_rng(15)
        fr = _freeze_random(31, rng, M=2, N=2, depth=2, d=2, o=1, q=1, rho="tanh")
        net = build_mces_network(fr)
        collapsed = collapse_identity_layers(net)
        assert collapsed.depth < net.depth
        x = rng.standard_normal((50, 2))
        np.testing.assert_allclose(
            eval_network(collapsed, x), eval_network(net, x), rtol=1e-13, atol=1e-13
        )


class TestCountBound:
    def test_m1_n1_instance(self):
        rng = np.random.default_rng(16)
        fr = _freeze_random(41, rng, M=1, N=1, depth=2, d=2, o=1, q=1, rho="tanh", sparsity=0.3)
        parts = (
            param_count(fr.f_net),
            param_count(fr.g_nets[0]),
            param_count(fr.mu_nets[0]),
            param_count(fr.sigma_nets[0]),
        )
        assert count_bound(fr) == sum(parts) + (2 + 1) * 2
        assert param_count(build_mces_network(fr)) <= count_bound(fr)

    @pytest.mark.parametrize(
        "M,N,depth,d,o,q,rho",
        [
            (1, 1, 1, 1, 1, 1, "identity"),
            (2, 3, 2, 2, 1, 2, "tanh"),
            (3, 2, 3, 3, 2, 1, "relu"),
            (2, 4, 2, 1, 1, 3, "tanh"),
        ],
    )
    def test_bound_holds_for_all_tested_shapes(self, M, N, depth, d, o, q, rho):
        rng = np.random.default_rng(1000 + M * 100 + N * 10 + depth)
        fr = _freeze_random(M * 7 + N, rng, M, N, depth, d, o, q, rho, sparsity=0.25)
        assert param_count(build_mces_network(fr)) <= count_bound(fr)

    def test_zero_coefficients_stay_under_identity_budget(self):
        fr = freeze_realization(
            seed=4,
            M=2,
            N=3,
            horizon_T=1.0,
            f_net=_zero_net((2, 1)),
            g_nets=_zero_net((2, 1)),
            mu_nets=_zero_net((2, 2)),
            sigma_nets=_zero_net((2, 2)),
        )
        assert count_bound(fr) == 2 * 3 * (2 + 1)
        assert param_count(build_mces_network(fr)) <= count_bound(fr)


class TestOracleEquivalence:
    @pytest.mark.parametrize(
        "name,depth,d,o,q,rho",
        [
            ("tanh", 2, 2, 1, 2, "tanh"),
            ("relu", 2, 1, 2, 1, "relu"),
            ("affine", 1, 3, 1, 2, "identity"),
        ],
    )
    def test_matches_direct_simulator(self, name, depth, d, o, q, rho):
        rng = np.random.default_rng(hash(name) % (2**32))
        M, N = 2, 3
        for seed in range(20):
            fr = _freeze_random(seed, rng, M, N, depth, d, o, q, rho)
            net = build_mces_network(fr)
            c = _net_coeffs(fr)
            xs = rng.standard_normal((100, d))
            net_vals = eval_network(net, xs)
            for i in range(100):
                oracle = estimate_value(c, xs[i], M, N, seed).value
                assert np.all(
                    np.abs(net_vals[i] - oracle) <= 1e-12 * (1.0 + np.abs(oracle))
                ), f"seed {seed}, point {i}"

    def test_matches_perturbed_estimate_on_frozen_seed(self):
        rng = np.random.default_rng(17)
        d, o, q, M, N, seed = 2, 1, 1, 4, 3, 77
        nets = {
            "mu": _random_net(rng, (d, d), rho="identity", scale=0.3),
            "sigma": _random_net(rng, (d, d * q), rho="identity", scale=0.3),
            "f": _random_net(rng, (d, o), rho="identity", scale=0.5),
            "g": _random_net(rng, (d, o), rho="identity", scale=0.5),
        }
        fr = freeze_realization(
            seed, M, N, 1.0, nets["f"], nets["g"], nets["mu"], nets["sigma"]
        )
        net = build_mces_network(fr)

        def as_map(ns):
            return linear_map(ns.layers[0].weight.copy(), ns.layers[0].bias.copy())

        base = CoefficientSet(
            mu=as_map(nets["mu"]),
            sigma=as_map(nets["sigma"]),
            f=as_map(nets["f"]),
            g=as_map(nets["g"]),
            horizon_T=1.0,
            dim_d=d,
            dim_o=o,
            sigma_shape=(d, q),
        )
        pair = PerturbedPair(
            base=base,
            pert=base,
            eta=analytic_growth(0.0, 1.0, 0),
            c0=analytic_growth(1.0, 1.0, 0),
            c1=analytic_growth(1.0, 1.0, 1),
        )
        x = np.array([0.4, -0.2])
        oracle = perturbed_estimate(pair, x, M, N, seed).value
        net_val = eval_network(net, x)
        assert np.all(np.abs(net_val - oracle) <= 1e-12 * (1.0 + np.abs(oracle)))
