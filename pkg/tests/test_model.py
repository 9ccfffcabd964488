import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from semfi.conditioning import build_guidance_pack
from semfi.errors import ConfigurationError, RangeError, ShapeError
from semfi.model import (
    DenoiserConfig,
    NoiseSchedule,
    PixelCodec,
    forward_denoiser,
    patchify,
    sample,
    unpatchify,
)
from conftest import make_bundle


def micro_cfg(**over):
    base = dict(
        height=8, width=8, channels=1, embed_dim=16, num_layers=1, num_heads=2,
        d_text=8, n_text_tokens=2, noise_steps=20, schedule_kind="cosine",
        patch_size=(1, 4, 4),
    )
    base.update(over)
    return DenoiserConfig(**base)


class TestPatchify:
    def test_token_count_4x8x8(self):
        cfg = micro_cfg(patch_size=(1, 4, 4), channels=8, embed_dim=128)
        x = torch.randn(4, 8, 8, 8)
        tokens = patchify(x, cfg)
        assert tokens.shape == (4 * 2 * 2, 1 * 4 * 4 * 8)

    def test_token_count_8x16x16_patch_244(self):
        # L = (8/2) * (16/4) * (16/4) = 4*4*4 = 64, recomputed by hand
        cfg = DenoiserConfig(
            height=16, width=16, channels=2, embed_dim=32, num_layers=1,
            num_heads=2, patch_size=(2, 4, 4),
        )
        x = torch.randn(8, 16, 16, 2)
        assert patchify(x, cfg).shape[0] == 64

    def test_identity_round_trip_exact(self):
        cfg = micro_cfg()
        x = torch.randn(4, 8, 8, 3)
        tokens = patchify(x, cfg)
        back = unpatchify(tokens, cfg, (4, 8, 8, 3))
        assert float((back - x).abs().max()) == 0.0

    def test_projection_round_trip(self):
        cfg = micro_cfg()
        x = torch.randn(2, 8, 8, 3)
        proj = torch.eye(1 * 4 * 4 * 3)
        back = unpatchify(patchify(x, cfg, proj), cfg, (2, 8, 8, 3), proj)
        assert float((back - x).abs().max()) < 1e-6

    def test_indivisible_axis_names_offender(self):
        cfg = micro_cfg(patch_size=(2, 4, 4))
        with pytest.raises(ConfigurationError, match="frame"):
            patchify(torch.randn(5, 8, 8, 1), cfg)

    @settings(max_examples=25, deadline=None)
    @given(
        nt=st.integers(1, 4), nh=st.integers(1, 3), nw=st.integers(1, 3),
        pt=st.integers(1, 3), ph=st.integers(1, 3), pw=st.integers(1, 3),
        c=st.integers(1, 4),
    )
    def test_round_trip_property(self, nt, nh, nw, pt, ph, pw, c):
        cfg = DenoiserConfig(
            height=nh * ph, width=nw * pw, channels=c,
            embed_dim=4, num_layers=1, num_heads=2, patch_size=(pt, ph, pw),
        )
        x = torch.randn(nt * pt, nh * ph, nw * pw, c)
        tokens = patchify(x, cfg)
        assert tokens.shape == (nt * nh * nw, pt * ph * pw * c)
        back = unpatchify(tokens, cfg, tuple(x.shape))
        assert torch.equal(back, x)


class TestNoiseSchedule:
    def test_default_endpoints(self):
        s = NoiseSchedule(200, "linear", 1e-4, 0.15)
        assert abs(np.sqrt(s.alpha_bar[0]) - 1.0) <= 1e-3
        assert np.sqrt(s.alpha_bar[-1]) <= 1e-3

    def test_cosine_endpoints(self):
        s = NoiseSchedule(50, "cosine")
        assert abs(np.sqrt(s.alpha_bar[0]) - 1.0) <= 1e-3
        assert np.sqrt(s.alpha_bar[-1]) <= 1e-3

    def test_monotone_noise(self):
        s = NoiseSchedule(100, "linear", 1e-4, 0.3)
        assert (np.diff(s.alpha_bar) < 0).all()

    def test_x0_round_trip_every_t(self):
        s = NoiseSchedule(200, "linear", 1e-4, 0.15)
        rng = np.random.default_rng(0)
        x0 = rng.random((3, 4, 4, 1))
        eps = rng.standard_normal((3, 4, 4, 1))
        for t in range(s.noise_steps):
            noisy = s.add_noise(x0, eps, t)
            rec = s.reconstruct_x0(noisy, eps, t)
            assert np.max(np.abs(rec - x0)) < 1e-5

    def test_weak_ladder_rejected(self):
        with pytest.raises(ConfigurationError):
            NoiseSchedule(50, "linear", 1e-4, 0.02)

    def test_timestep_range_checked(self):
        s = NoiseSchedule(50, "cosine")
        with pytest.raises(RangeError):
            s.signal_coeff(50)
        with pytest.raises(RangeError):
            s.signal_coeff(-1)

    def test_sampling_times_descend_to_zero(self):
        s = NoiseSchedule(50, "cosine")
        times = s.sampling_times(7)
        assert times[0] == 49 and times[-1] == 0
        assert (np.diff(times) < 0).all()


class TestPixelCodec:
    def test_identity_when_unpooled(self):
        rng = np.random.default_rng(0)
        f = rng.random((3, 8, 8, 2)).astype(np.float32)
        codec = PixelCodec(1)
        np.testing.assert_array_equal(codec.encode(f), f)
        np.testing.assert_array_equal(codec.decode(f), f)

    def test_pool2_shapes_and_inverse(self):
        codec = PixelCodec(2)
        f = np.full((2, 8, 8, 1), 0.25, dtype=np.float32)
        z = codec.encode(f)
        assert z.shape == (2, 4, 4, 1)
        np.testing.assert_allclose(codec.decode(z), f)


class TestForwardDenoiser:
    def _inputs(self, bundle, n=5, seed=0):
        cfg, model, schedule, codec, te, ie, mol = bundle
        rng = np.random.default_rng(seed)
        I_f = rng.random((cfg.height, cfg.width, cfg.channels)).astype(np.float32)
        I_l = rng.random((cfg.height, cfg.width, cfg.channels)).astype(np.float32)
        noisy = rng.standard_normal(
            (n, cfg.latent_height, cfg.latent_width, cfg.channels)
        ).astype(np.float32)
        pack = build_guidance_pack(I_f, I_l, n, ie, frame_encoder=codec.encode_frame)
        emb = te.encode("a small blue square moves left")
        return noisy, pack, emb

    def test_output_shape_matches_input(self, tiny_bundle):
        cfg, model, schedule, codec, te, ie, mol = tiny_bundle
        noisy, pack, emb = self._inputs(tiny_bundle, n=7)
        out = forward_denoiser(model, noisy, 3, emb, pack, mol, 7)
        assert out.shape == noisy.shape

    def test_deterministic(self, tiny_bundle):
        cfg, model, schedule, codec, te, ie, mol = tiny_bundle
        noisy, pack, emb = self._inputs(tiny_bundle)
        a = forward_denoiser(model, noisy, 3, emb, pack, mol, 5)
        b = forward_denoiser(model, noisy, 3, emb, pack, mol, 5)
        np.testing.assert_array_equal(a, b)

    def test_all_zero_weights_give_zero_output(self):
        cfg, model, schedule, codec, te, ie, mol = make_bundle()
        with torch.no_grad():
            for p in model.parameters():
                p.zero_()
        noisy, pack, emb = self._inputs((cfg, model, schedule, codec, te, ie, mol))
        out = forward_denoiser(model, noisy, 3, emb, pack, None, 5)
        assert np.abs(out).sum() == 0.0

    def test_fresh_adapters_are_neutral(self, tiny_bundle):
        cfg, model, schedule, codec, te, ie, mol = tiny_bundle
        noisy, pack, emb = self._inputs(tiny_bundle)
        with_mol = forward_denoiser(model, noisy, 3, emb, pack, mol, 5)
        without = forward_denoiser(model, noisy, 3, emb, pack, None, 5)
        np.testing.assert_array_equal(with_mol, without)

    def test_trained_adapter_changes_output(self, tiny_bundle):
        cfg, model, schedule, codec, te, ie, mol = tiny_bundle
        noisy, pack, emb = self._inputs(tiny_bundle)
        with torch.no_grad():
            layer = mol.universal.covers()[0]
            mol.universal.factors[f"{layer}/B"].fill_(0.1)
        with_mol = forward_denoiser(model, noisy, 3, emb, pack, mol, 5)
        without = forward_denoiser(model, noisy, 3, emb, pack, None, 5)
        assert np.abs(with_mol - without).max() > 0.0

    def test_timestep_out_of_range_rejected(self, tiny_bundle):
        cfg, model, schedule, codec, te, ie, mol = tiny_bundle
        noisy, pack, emb = self._inputs(tiny_bundle)
        with pytest.raises(RangeError):
            forward_denoiser(model, noisy, cfg.noise_steps, emb, pack, mol, 5)

    def test_target_n_mismatch_rejected(self, tiny_bundle):
        cfg, model, schedule, codec, te, ie, mol = tiny_bundle
        noisy, pack, emb = self._inputs(tiny_bundle, n=5)
        with pytest.raises(ShapeError):
            forward_denoiser(model, noisy, 3, emb, pack, mol, 9)

    @settings(max_examples=8, deadline=None)
    @given(
        n=st.sampled_from([2, 3, 5, 8]),
        heads=st.sampled_from([1, 2]),
        layers=st.integers(1, 2),
    )
    def test_shape_closure_random_configs(self, n, heads, layers):
        cfg, model, schedule, codec, te, ie, mol = make_bundle(
            num_heads=heads, num_layers=layers
        )
        rng = np.random.default_rng(n)
        noisy = rng.standard_normal((n, 16, 16, 1)).astype(np.float32)
        pack = build_guidance_pack(
            rng.random((16, 16, 1)).astype(np.float32),
            rng.random((16, 16, 1)).astype(np.float32),
            n, ie,
        )
        out = forward_denoiser(model, noisy, 1, te.encode("x"), pack, mol, n)
        assert out.shape == noisy.shape


class TestSampling:
    def test_returns_exactly_n_frames(self, tiny_bundle):
        cfg, model, schedule, codec, te, ie, mol = tiny_bundle
        rng = np.random.default_rng(3)
        I_f = rng.random((16, 16, 1)).astype(np.float32)
        I_l = rng.random((16, 16, 1)).astype(np.float32)
        clip = sample(model, schedule, codec, te, ie, I_f, I_l, "t", 5, 4, 0, mol=mol)
        assert clip.num_frames == 5

    def test_clamped_endpoints_exact(self, tiny_bundle):
        cfg, model, schedule, codec, te, ie, mol = tiny_bundle
        rng = np.random.default_rng(4)
        I_f = rng.random((16, 16, 1)).astype(np.float32)
        I_l = rng.random((16, 16, 1)).astype(np.float32)
        clip = sample(
            model, schedule, codec, te, ie, I_f, I_l, "t", 6, 4, 0,
            mol=mol, clamp_endpoints=True,
        )
        np.testing.assert_array_equal(clip.frames[0], I_f)
        np.testing.assert_array_equal(clip.frames[-1], I_l)

    def test_same_seed_identical_output(self, tiny_bundle):
        cfg, model, schedule, codec, te, ie, mol = tiny_bundle
        rng = np.random.default_rng(5)
        I_f = rng.random((16, 16, 1)).astype(np.float32)
        I_l = rng.random((16, 16, 1)).astype(np.float32)
        kw = dict(mol=mol, clamp_endpoints=False)
        a = sample(model, schedule, codec, te, ie, I_f, I_l, "t", 5, 4, 9, **kw)
        b = sample(model, schedule, codec, te, ie, I_f, I_l, "t", 5, 4, 9, **kw)
        np.testing.assert_array_equal(a.frames, b.frames)

    def test_different_seed_differs(self, tiny_bundle):
        cfg, model, schedule, codec, te, ie, mol = tiny_bundle
        rng = np.random.default_rng(5)
        I_f = rng.random((16, 16, 1)).astype(np.float32)
        I_l = rng.random((16, 16, 1)).astype(np.float32)
        kw = dict(mol=mol, clamp_endpoints=False)
        a = sample(model, schedule, codec, te, ie, I_f, I_l, "t", 5, 4, 9, **kw)
        b = sample(model, schedule, codec, te, ie, I_f, I_l, "t", 5, 4, 10, **kw)
        assert np.abs(a.frames - b.frames).max() > 0.0

    def test_untrained_unclamped_stays_in_range(self, tiny_bundle):
        cfg, model, schedule, codec, te, ie, mol = tiny_bundle
        rng = np.random.default_rng(6)
        I_f = rng.random((16, 16, 1)).astype(np.float32)
        I_l = rng.random((16, 16, 1)).astype(np.float32)
        clip = sample(
            model, schedule, codec, te, ie, I_f, I_l, "t", 9, 6, 0,
            mol=mol, clamp_endpoints=False,
        )
        assert np.isfinite(clip.frames).all()
        assert clip.frames.min() >= 0.0 and clip.frames.max() <= 1.0

    def test_routed_expert_recorded(self, tiny_bundle):
        cfg, model, schedule, codec, te, ie, mol = tiny_bundle
        rng = np.random.default_rng(7)
        I_f = rng.random((16, 16, 1)).astype(np.float32)
        clip = sample(model, schedule, codec, te, ie, I_f, I_f, "t", 20, 3, 0, mol=mol)
        assert clip.meta["expert_s"] == 17

    def test_n_below_2_rejected(self, tiny_bundle):
        cfg, model, schedule, codec, te, ie, mol = tiny_bundle
        I = np.zeros((16, 16, 1), dtype=np.float32)
        with pytest.raises(RangeError):
            sample(model, schedule, codec, te, ie, I, I, "t", 1, 4, 0, mol=mol)


class TestConcurrentInference:
    def test_parallel_forwards_match_serial(self, tiny_bundle):
        import concurrent.futures

        cfg, model, schedule, codec, te, ie, mol = tiny_bundle
        rng = np.random.default_rng(11)
        inputs = []
        for k in range(6):
            noisy = rng.standard_normal((4, 16, 16, 1)).astype(np.float32)
            pack = build_guidance_pack(
                rng.random((16, 16, 1)).astype(np.float32),
                rng.random((16, 16, 1)).astype(np.float32),
                4, ie,
            )
            inputs.append((noisy, pack))
        emb = te.encode("x")
        serial = [
            forward_denoiser(model, noisy, 2, emb, pack, mol, 4)
            for noisy, pack in inputs
        ]
        with concurrent.futures.ThreadPoolExecutor(max_workers=4) as pool:
            parallel = list(
                pool.map(
                    lambda np_: forward_denoiser(model, np_[0], 2, emb, np_[1],
                                                 mol, 4),
                    inputs,
                )
            )
        for a, b in zip(serial, parallel):
            np.testing.assert_array_equal(a, b)


class TestDenoiserConfigValidation:
    def test_embed_not_divisible_by_heads(self):
        with pytest.raises(ConfigurationError):
            micro_cfg(embed_dim=30, num_heads=4)

    def test_patch_must_divide_resolution(self):
        with pytest.raises(ConfigurationError):
            micro_cfg(height=10, patch_size=(1, 4, 4))

    def test_prediction_target_validated(self):
        with pytest.raises(ConfigurationError):
            micro_cfg(prediction_target="x0")

    def test_max_frames_floor(self):
        with pytest.raises(ConfigurationError):
            micro_cfg(max_frames=50)

    def test_velocity_mode_runs(self):
        cfg, model, schedule, codec, te, ie, mol = make_bundle(
            prediction_target="velocity"
        )
        rng = np.random.default_rng(0)
        I_f = rng.random((16, 16, 1)).astype(np.float32)
        clip = sample(model, schedule, codec, te, ie, I_f, I_f, "t", 4, 3, 0, mol=mol)
        assert clip.num_frames == 4
        assert np.isfinite(clip.frames).all()
