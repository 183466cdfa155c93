"""Decoupled dynamic filters, ESA, DRB, and the aggregation module."""

import numpy as np
import pytest

from frfsr.aggregation import (DF_TAPS, DecoupledFilters, RoutingWeights,
                               dfm_forward, drb_forward, dynamic_filter_apply,
                               esa_attention, filter_normalize,
                               generate_filters, init_dfm_params,
                               init_drb_params, init_esa_params,
                               init_taam_params, routing_from_params,
                               taam_aggregate)
from frfsr.gradcheck import grad_check
from frfsr.tensor import Tensor

TAP_OFFSETS = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)]


def decoupled_brute_force(f, sf, cf):
    """Materialize the per-pixel-per-channel outer-product filter and apply it
    with explicit loops (zero padding)."""
    n, c, h, w = f.shape
    out = np.zeros_like(f)
    for b in range(n):
        for k in range(c):
            for i in range(h):
                for j in range(w):
                    acc = 0.0
                    for t, (dy, dx) in enumerate(TAP_OFFSETS):
                        ii, jj = i + dy, j + dx
                        if 0 <= ii < h and 0 <= jj < w:
                            acc += sf[b, t, i, j] * cf[b, k, t] * f[b, k, ii, jj]
                    out[b, k, i, j] = acc
    return out


class TestDecoupledFilter:
    def test_matches_outer_product_brute_force(self):
        for seed in range(10):
            r = np.random.default_rng(seed)
            f = r.standard_normal((1, 4, 5, 5))
            sf = r.standard_normal((1, DF_TAPS, 5, 5))
            cf = r.standard_normal((1, 4, DF_TAPS))
            filters = DecoupledFilters(spatial=Tensor(sf), channel=Tensor(cf))
            routing = RoutingWeights(gamma_sf=Tensor(np.ones(())), beta_sf=Tensor(np.zeros(())),
                                     gamma_cf=Tensor(np.ones(())), beta_cf=Tensor(np.zeros(())))
            out = dynamic_filter_apply(Tensor(f), filters, routing)
            assert np.abs(out.data - decoupled_brute_force(f, sf, cf)).max() <= 1e-6

    def test_shape_mismatch_rejected(self, rng):
        f = Tensor(rng.standard_normal((1, 4, 5, 5)))
        routing = RoutingWeights(*(Tensor(np.ones(())) for _ in range(4)))
        bad = DecoupledFilters(spatial=Tensor(rng.standard_normal((1, 9, 4, 4))),
                               channel=Tensor(rng.standard_normal((1, 4, 9))))
        with pytest.raises(ValueError):
            dynamic_filter_apply(f, bad, routing)

    def test_filter_normalize_invariants(self, rng):
        x = Tensor(rng.standard_normal((2, DF_TAPS, 4, 4)))
        y = filter_normalize(x, axis=1)
        assert np.abs(y.data.mean(axis=1)).max() <= 1e-6
        # unit standard deviation up to the epsilon regularizer
        assert np.abs(y.data.std(axis=1) - 1.0).max() <= 1e-3

    def test_generated_filters_are_normalized(self, rng):
        params = init_dfm_params(rng, 8)
        f = Tensor(rng.standard_normal((2, 8, 6, 6)).astype(np.float32))
        filters = generate_filters(f, params)
        assert filters.spatial.shape == (2, DF_TAPS, 6, 6)
        assert filters.channel.shape == (2, 8, DF_TAPS)
        assert np.abs(filters.spatial.data.mean(axis=1)).max() <= 1e-5
        assert np.abs(filters.channel.data.mean(axis=2)).max() <= 1e-5

    def test_too_few_channels_rejected(self, rng):
        with pytest.raises(ValueError):
            init_dfm_params(rng, 3)

    def test_dfm_grad(self, rng):
        params = init_dfm_params(rng, 4, dtype=np.float64)
        f = Tensor(rng.standard_normal((1, 4, 5, 5)), requires_grad=True)
        wrt = [f, params["spatial_w"], params["fc2_w"], params["gamma_sf"], params["gamma_cf"]]
        rep = grad_check(lambda f_: dfm_forward(f_, params), [f], wrt=None, op_name="dfm")
        assert rep.ok(), rep


class TestESA:
    def test_mask_bounds_output(self, rng):
        params = init_esa_params(rng, 8)
        f = Tensor(rng.standard_normal((2, 8, 8, 8)).astype(np.float32))
        out = esa_attention(f, params)
        assert out.shape == f.shape
        # sigmoid mask in (0, 1): output strictly between 0 and the input
        assert np.all(np.abs(out.data) <= np.abs(f.data))
        assert not np.allclose(out.data, f.data)

    def test_small_spatial_size_rejected(self, rng):
        params = init_esa_params(rng, 8)
        with pytest.raises(ValueError):
            esa_attention(Tensor(rng.standard_normal((1, 8, 3, 3))), params)

    def test_channels_not_divisible_rejected(self, rng):
        with pytest.raises(ValueError):
            init_esa_params(rng, 6)

    def test_works_at_minimum_size(self, rng):
        params = init_esa_params(rng, 4)
        out = esa_attention(Tensor(rng.standard_normal((1, 4, 4, 4)).astype(np.float32)), params)
        assert out.shape == (1, 4, 4, 4)


class TestDRBAndTAAM:
    def test_drb_preserves_shape(self, rng):
        params = init_drb_params(rng, 8, n_units=2)
        f = Tensor(rng.standard_normal((1, 8, 6, 6)).astype(np.float32))
        assert drb_forward(f, params).shape == f.shape

    def test_plain_residual_variant_skips_dynamic_filters(self, rng):
        params = init_drb_params(rng, 8, n_units=1, use_dynamic=False)
        assert "dfm1" not in params["units"][0]
        f = Tensor(rng.standard_normal((1, 8, 6, 6)).astype(np.float32))
        assert drb_forward(f, params).shape == f.shape

    def test_zero_fusion_makes_taam_identity(self, rng):
        params = init_taam_params(rng, in_channels=16, channels=8, n_units=2)
        params["fuse_w"].data[:] = 0
        params["fuse_b"].data[:] = 0
        f_tex = Tensor(rng.standard_normal((1, 8, 6, 6)).astype(np.float32))
        f_lr = Tensor(rng.standard_normal((1, 8, 6, 6)).astype(np.float32))
        out = taam_aggregate(f_tex, f_lr, params)
        assert np.abs(out.data - f_lr.data).max() <= 1e-6

    def test_sife_only_at_smallest_scale(self, rng):
        params = init_taam_params(rng, in_channels=24, channels=8)
        f = Tensor(rng.standard_normal((1, 8, 6, 6)).astype(np.float32))
        with pytest.raises(ValueError):
            taam_aggregate(f, f, params, f_sife=f, smallest_scale=False)

    def test_channel_accounting_enforced(self, rng):
        params = init_taam_params(rng, in_channels=16, channels=8)
        f = Tensor(rng.standard_normal((1, 8, 6, 6)).astype(np.float32))
        with pytest.raises(ValueError):
            taam_aggregate(f, f, params, f_reuse=f)  # 24 channels vs 16 expected

    def test_drb_grad(self, rng):
        params = init_drb_params(rng, 4, n_units=1)
        # promote to float64 for the check
        def promote(tree):
            for k, v in tree.items() if isinstance(tree, dict) else enumerate(tree):
                if isinstance(v, Tensor):
                    v.data = v.data.astype(np.float64)
                elif isinstance(v, (dict, list)):
                    promote(v)
        promote(params)
        f = Tensor(rng.standard_normal((1, 4, 5, 5)), requires_grad=True)
        rep = grad_check(lambda f_: drb_forward(f_, params), [f], op_name="drb")
        assert rep.ok(), rep
