import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specprune.errors import InvalidArgument, SafeguardViolation
from specprune.network import Conv, parse_spec
from specprune.nn import ModelState, forward, init_model
from specprune.prune import (
    PruneMask,
    PruneReport,
    LayerPruneRow,
    compute_fr_pr,
    count_flops_params,
    default_k_min,
    propagate_and_apply,
    select_channels,
)


class TestSelectChannels:
    def test_threshold_selection(self):
        keep, flagged = select_channels(np.array([0.2, 0.7, 0.9]), 0.6, 1)
        assert keep == [1, 2] and not flagged

    def test_safeguard_with_tie_break(self):
        keep, flagged = select_channels(np.array([0.1, 0.1, 0.3]), 0.5, 2)
        assert keep == [0, 2] and flagged  # tie at 0.1 broken toward index 0

    def test_tau_zero_keeps_all(self):
        keep, flagged = select_channels(np.array([0.0, 0.5, 1.0]), 0.0, 1)
        assert keep == [0, 1, 2] and not flagged

    def test_k_min_out_of_range(self):
        with pytest.raises(InvalidArgument):
            select_channels(np.array([0.5, 0.5]), 0.5, 3)
        with pytest.raises(InvalidArgument):
            select_channels(np.array([0.5, 0.5]), 0.5, 0)

    def test_tau_out_of_range(self):
        with pytest.raises(InvalidArgument):
            select_channels(np.array([0.5]), 1.5, 1)

    @given(
        scores=st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=16),
        k_min=st.integers(min_value=1, max_value=4),
        tau=st.floats(min_value=0.0, max_value=1.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_never_empty(self, scores, k_min, tau):
        scores = np.array(scores)
        k_min = min(k_min, scores.size)
        keep, _ = select_channels(scores, tau, k_min)
        assert len(keep) >= 1
        assert keep == sorted(keep)

    @given(
        scores=st.lists(
            st.floats(min_value=0.0, max_value=1.0), min_size=3, max_size=16
        ),
        taus=st.tuples(
            st.floats(min_value=0.0, max_value=1.0),
            st.floats(min_value=0.0, max_value=1.0),
        ),
    )
    @settings(max_examples=200, deadline=None)
    def test_monotone_in_tau(self, scores, taus):
        scores = np.array(scores)
        t1, t2 = min(taus), max(taus)
        keep1, f1 = select_channels(scores, t1, 1)
        keep2, f2 = select_channels(scores, t2, 1)
        if not f1 and not f2:
            assert set(keep2) <= set(keep1)

    def test_default_k_min(self):
        assert default_k_min(8) == 2
        assert default_k_min(64) == 4
        assert default_k_min(1) == 1


def toy_model(seed=0, bn=False):
    bn_flag = 1 if bn else 0
    spec = parse_spec(
        f"""
input 2 8 8
conv out=4 k=3 stride=1 pad=1 bias=1 bn={bn_flag} act=relu
conv out=2 k=3 stride=1 pad=1 bias=1 bn=0 act=relu
maxpool k=2 stride=2
flatten
linear out=3 bias=1
"""
    )
    model = init_model(spec, seed=seed)
    rng = np.random.default_rng(seed + 100)
    # non-zero biases and batchnorm stats so slicing mistakes cannot hide
    for entry in model.weights:
        if entry is None:
            continue
        if "b" in entry:
            entry["b"] = rng.standard_normal(entry["b"].shape) * 0.1
        if "bn_gamma" in entry:
            entry["bn_gamma"] = rng.uniform(0.5, 1.5, entry["bn_gamma"].shape)
            entry["bn_beta"] = rng.standard_normal(entry["bn_beta"].shape) * 0.1
            entry["bn_mean"] = rng.standard_normal(entry["bn_mean"].shape) * 0.1
            entry["bn_var"] = rng.uniform(0.5, 2.0, entry["bn_var"].shape)
    return model


def masked_dense_forward(model, x, keep):
    """Dense forward with pruned channels' activations forced to zero."""
    from specprune.network import Flatten, Linear, MaxPool
    from specprune.nn import _bn_affine, _conv_forward, _pool_forward

    act = x
    for idx, layer in enumerate(model.spec.layers):
        entry = model.weights[idx]
        if isinstance(layer, Conv):
            pre, _ = _conv_forward(act, entry["w"], entry.get("b"), layer.stride, layer.padding)
            if layer.batchnorm:
                scale, shift = _bn_affine(entry)
                pre = pre * scale[None, :, None, None] + shift[None, :, None, None]
            out = np.maximum(pre, 0.0) if layer.activation == "relu" else pre
            gate = np.zeros(layer.out_channels)
            gate[list(keep[idx])] = 1.0
            act = out * gate[None, :, None, None]
        elif isinstance(layer, MaxPool):
            act, _ = _pool_forward(act, layer.k, layer.stride)
        elif isinstance(layer, Flatten):
            act = act.reshape(act.shape[0], -1)
        elif isinstance(layer, Linear):
            act = act @ entry["w"].T + (entry["b"] if layer.bias else 0.0)
    return act


class TestPropagateAndApply:
    def test_all_keep_mask_is_identity(self):
        model = toy_model()
        mask = PruneMask({0: (0, 1, 2, 3), 1: (0, 1)})
        new_spec, new_weights = propagate_and_apply(model.spec, mask, model.weights)
        assert new_spec == model.spec
        for old, new in zip(model.weights, new_weights):
            if old is None:
                assert new is None
            else:
                for key in old:
                    assert np.array_equal(old[key], new[key])

    def test_two_conv_chain_drop_one_channel(self):
        model = toy_model(seed=1)
        mask = PruneMask({0: (0, 2, 3), 1: (0, 1)})
        new_spec, new_weights = propagate_and_apply(model.spec, mask, model.weights)
        assert new_spec.layers[0].out_channels == 3
        assert new_spec.layers[1].in_channels == 3
        rng = np.random.default_rng(2)
        x = rng.standard_normal((4, 2, 8, 8))
        pruned = ModelState(new_spec, new_weights)
        dense = masked_dense_forward(model, x, {0: (0, 2, 3), 1: (0, 1)})
        small, _ = forward(pruned, x)
        assert np.abs(dense - small).max() < 1e-6

    def test_batchnorm_slices_travel_with_conv(self):
        model = toy_model(seed=3, bn=True)
        keep = {0: (1, 3), 1: (0, 1)}
        mask = PruneMask({k: tuple(v) for k, v in keep.items()})
        new_spec, new_weights = propagate_and_apply(model.spec, mask, model.weights)
        assert np.array_equal(new_weights[0]["bn_gamma"], model.weights[0]["bn_gamma"][[1, 3]])
        rng = np.random.default_rng(4)
        x = rng.standard_normal((3, 2, 8, 8))
        dense = masked_dense_forward(model, x, keep)
        small, _ = forward(ModelState(new_spec, new_weights), x)
        assert np.abs(dense - small).max() < 1e-6

    def test_flatten_linear_feature_blocks(self):
        spec = parse_spec(
            """
input 1 4 4
conv out=2 k=3 stride=1 pad=1 bias=0 bn=0 act=relu
flatten
linear out=5 bias=0
"""
        )
        model = init_model(spec, seed=5)
        mask = PruneMask({0: (1,)})  # drop channel 0
        new_spec, new_weights = propagate_and_apply(model.spec, mask, model.weights)
        assert new_spec.layers[2].in_features == 16
        # linear keeps exactly the features of channel 1: columns 16..31
        assert np.array_equal(new_weights[2]["w"], model.weights[2]["w"][:, 16:32])

    def test_mask_validation(self):
        model = toy_model()
        with pytest.raises(InvalidArgument):
            PruneMask({0: (0, 5), 1: (0,)}).validate(model.spec)
        with pytest.raises(InvalidArgument):
            PruneMask({0: (2, 1), 1: (0,)}).validate(model.spec)
        with pytest.raises(InvalidArgument):
            PruneMask({0: (0,)}).validate(model.spec)  # missing conv layer
        with pytest.raises(SafeguardViolation):
            PruneMask({0: (), 1: (0,)}).validate(model.spec)

    def test_pruning_never_increases_counts(self):
        model = toy_model(seed=6)
        base = count_flops_params(model.spec)
        rng = np.random.default_rng(7)
        for _ in range(10):
            keep0 = tuple(sorted(rng.choice(4, size=rng.integers(1, 5), replace=False)))
            keep1 = tuple(sorted(rng.choice(2, size=rng.integers(1, 3), replace=False)))
            new_spec, _ = propagate_and_apply(
                model.spec, PruneMask({0: keep0, 1: keep1}), model.weights
            )
            flops, params = count_flops_params(new_spec)
            assert flops <= base[0] and params <= base[1]


class TestCounts:
    def test_single_conv_hand_count(self):
        spec = parse_spec("input 1 10 10\nconv out=1 k=3 stride=1 pad=1 bias=0 bn=0\n")
        flops, params = count_flops_params(spec)
        assert params == 9
        assert flops == 9 * 10 * 10  # same padding keeps the 10x10 grid

    def test_conv_8x8_output_count(self):
        spec = parse_spec("input 1 8 8\nconv out=1 k=3 stride=1 pad=1 bias=0 bn=0\n")
        flops, params = count_flops_params(spec)
        assert (flops, params) == (576, 9)

    def test_linear_with_bias(self):
        spec = parse_spec("graph\ninput 1 1 1\nlinear in=10 out=5 bias=1\n")
        flops, params = count_flops_params(spec)
        assert (flops, params) == (50, 55)

    def test_additive_over_layers(self):
        a = parse_spec("input 1 8 8\nconv out=2 k=3 stride=1 pad=1 bias=0 bn=0\n")
        b = parse_spec("input 2 8 8\nconv out=3 k=3 stride=1 pad=1 bias=1 bn=1\n")
        both = parse_spec(
            "input 1 8 8\n"
            "conv out=2 k=3 stride=1 pad=1 bias=0 bn=0\n"
            "conv out=3 k=3 stride=1 pad=1 bias=1 bn=1\n"
        )
        fa, pa = count_flops_params(a)
        fb, pb = count_flops_params(b)
        fab, pab = count_flops_params(both)
        assert (fab, pab) == (fa + fb, pa + pb)


class TestFrPr:
    def test_identical_counts(self):
        assert compute_fr_pr((100, 50), (100, 50)) == (0.0, 0.0)

    def test_half_counts(self):
        assert compute_fr_pr((100, 50), (50, 25)) == (50.0, 50.0)

    def test_published_parameter_reduction(self):
        # 14.99M -> 0.5546M parameters is a 96.30% reduction
        _, pr = compute_fr_pr((314_570_000, 14_990_000), (31_100_000, 554_600))
        assert abs(pr - 96.30) < 0.005

    def test_zero_baseline_rejected(self):
        with pytest.raises(InvalidArgument):
            compute_fr_pr((0, 10), (0, 5))


class TestPruneReport:
    def test_invariants(self):
        row = LayerPruneRow("conv0", 2, 4, False)
        report = PruneReport(
            tau=0.5, fusion="add", alpha=0.5, k_min_rule="fixed:2", seed=0,
            capture_point="post_activation", pool_size=8, layers=[row],
            baseline_flops=100, baseline_params=50, pruned_flops=60,
            pruned_params=30, fr=40.0, pr=40.0, tool_version="0.1.0",
            config_hash="ff",
        )
        assert report.fr == 40.0
        with pytest.raises(InvalidArgument):
            PruneReport(
                tau=0.5, fusion="add", alpha=0.5, k_min_rule="fixed:2", seed=0,
                capture_point="post_activation", pool_size=8, layers=[row],
                baseline_flops=100, baseline_params=50, pruned_flops=60,
                pruned_params=30, fr=100.0, pr=40.0, tool_version="0.1.0",
                config_hash="ff",
            )
