import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semfi.bench import (
    JointProbeEmbedder,
    RandomConvEmbedder,
    aesthetic_quality,
    dynamic_degree,
    fit_probe_on_synthetic,
    frame_fidelity,
    frechet_feature_distance,
    imaging_quality,
    motion_smoothness,
    perceptual_distance,
    psnr,
    semantic_fidelity,
    ssim,
    temporal_flickering,
)
from semfi.data import ConstantFlow, GlobalShiftFlow
from semfi.data.synth import SynthConfig, synth_video
from semfi.errors import (
    DegenerateFeatureError,
    PairingError,
    PredictorNotConfigured,
    RangeError,
    ShapeError,
    StatisticsError,
)

RNG = np.random.default_rng(0)
EMB = RandomConvEmbedder(7)


class FlatEmbedder:
    """Identity embedder: features are the flattened frame values."""

    def __call__(self, frame):
        return np.asarray(frame, dtype=np.float64).reshape(-1)


class TestPsnr:
    def test_identical_capped_at_99(self):
        a = RNG.random((4, 8, 8, 3)).astype(np.float32)
        assert psnr(a, a) == 99.0

    def test_hand_computed_quarter_mse(self):
        a = np.zeros((4, 8, 8, 1))
        b = np.full((4, 8, 8, 1), 0.5)
        # MSE = 0.25 -> 10*log10(4) = 6.0206
        assert psnr(a, b) == pytest.approx(10 * np.log10(4), abs=1e-9)

    def test_symmetric(self):
        a = RNG.random((2, 8, 8, 1))
        b = RNG.random((2, 8, 8, 1))
        assert psnr(a, b) == psnr(b, a)

    def test_gaussian_sigma_point1_is_20db(self):
        rng = np.random.default_rng(7)
        base = np.full((64, 64, 3), 0.5)
        noisy = np.clip(base + rng.normal(0, 0.1, base.shape), 0, 1)
        assert psnr(base, noisy) == pytest.approx(20.0, abs=0.2)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            psnr(np.zeros((2, 4, 4, 1)), np.zeros((2, 4, 5, 1)))


class TestSsim:
    def test_identical_is_one(self):
        a = RNG.random((16, 16, 3))
        assert ssim(a, a) == pytest.approx(1.0)

    def test_constant_plus_tiny_noise_golden(self):
        rng = np.random.default_rng(42)
        const = np.full((32, 32, 1), 0.5)
        noised = const + rng.normal(0, 0.01, const.shape)
        v = ssim(const, noised)
        assert 0.9 < v < 1.0
        assert v == pytest.approx(0.9060806059770775, abs=1e-9)

    def test_symmetric(self):
        a = RNG.random((16, 16, 1))
        b = RNG.random((16, 16, 1))
        assert ssim(a, b) == pytest.approx(ssim(b, a))

    def test_frame_smaller_than_window_rejected(self):
        with pytest.raises(ShapeError):
            ssim(np.zeros((5, 5, 1)), np.zeros((5, 5, 1)), window=7)


class TestPerceptualDistance:
    def test_identical_clips_zero(self):
        a = RNG.random((5, 16, 16, 3)).astype(np.float32)
        assert perceptual_distance(a, a, EMB) == 0.0

    def test_non_negative_random_pairs(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            a = rng.random((1, 8, 8, 1))
            b = rng.random((1, 8, 8, 1))
            assert perceptual_distance(a, b, EMB) >= 0.0

    def test_monotone_in_noise_level(self):
        rng = np.random.default_rng(3)
        bases = [rng.random((16, 16, 3)) for _ in range(50)]
        medians = []
        for sigma in (0.01, 0.05, 0.1):
            dists = [
                perceptual_distance(
                    b[None], np.clip(b + rng.normal(0, sigma, b.shape), 0, 1)[None],
                    EMB,
                )
                for b in bases
            ]
            medians.append(np.median(dists))
        assert medians[0] < medians[1] < medians[2]

    def test_frame_count_mismatch_rejected(self):
        with pytest.raises(PairingError):
            perceptual_distance(
                np.zeros((3, 8, 8, 1)), np.zeros((4, 8, 8, 1)), EMB
            )


class TestFrechet:
    def test_identical_sets_zero(self):
        feats = RNG.standard_normal((40, 6)).reshape(40, 1, 2, 3)
        assert frechet_feature_distance(feats, feats, FlatEmbedder()) == pytest.approx(
            0.0, abs=1e-6
        )

    def test_mean_offset_equals_squared_norm(self):
        rng = np.random.default_rng(11)
        base = rng.standard_normal((64, 5))
        offset = np.array([1.0, -2.0, 0.5, 0.0, 3.0])
        a = base.reshape(64, 1, 1, 5)
        b = (base + offset).reshape(64, 1, 1, 5)
        fd = frechet_feature_distance(a, b, FlatEmbedder())
        assert fd == pytest.approx(float(np.sum(offset**2)), abs=1e-4)

    def test_symmetric(self):
        rng = np.random.default_rng(12)
        a = rng.standard_normal((30, 1, 1, 4))
        b = rng.standard_normal((30, 1, 1, 4)) + 0.5
        f1 = frechet_feature_distance(a, b, FlatEmbedder())
        f2 = frechet_feature_distance(b, a, FlatEmbedder())
        assert f1 == pytest.approx(f2, rel=1e-8)

    def test_single_frame_set_rejected(self):
        with pytest.raises(StatisticsError):
            frechet_feature_distance(
                np.zeros((1, 4, 4, 1)), np.zeros((5, 4, 4, 1)), FlatEmbedder()
            )


class TestTemporalFlickering:
    def test_static_clip_is_one(self):
        clip = np.broadcast_to(RNG.random((8, 8, 1)), (6, 8, 8, 1)).copy()
        assert temporal_flickering(clip) == 1.0

    def test_alternating_black_white_is_zero(self):
        frames = np.zeros((4, 4, 4, 1))
        frames[1::2] = 1.0
        assert temporal_flickering(frames) == 0.0

    def test_linear_ramp_hand_computed(self):
        frames = np.stack(
            [np.full((4, 4, 1), v) for v in (0.0, 0.1, 0.2)]
        )
        assert temporal_flickering(frames) == pytest.approx(0.9)

    def test_single_frame_rejected(self):
        with pytest.raises(RangeError):
            temporal_flickering(np.zeros((1, 4, 4, 1)))

    def test_uniform_brightness_offset_invariant(self):
        rng = np.random.default_rng(13)
        clip = rng.random((5, 8, 8, 1)) * 0.5
        shifted = clip + 0.25
        assert temporal_flickering(clip) == pytest.approx(
            temporal_flickering(shifted)
        )


class TestMotionSmoothness:
    def test_static_clip_is_one(self):
        clip = np.broadcast_to(RNG.random((8, 8, 1)), (7, 8, 8, 1)).copy()
        assert motion_smoothness(clip) == 1.0

    def test_linear_ramp_exact_under_average(self):
        frames = np.stack([np.full((4, 4, 1), 0.1 * i) for i in range(7)])
        assert motion_smoothness(frames) == pytest.approx(1.0)

    def test_impulse_hand_computed(self):
        # 5 frames, impulse of magnitude 1 on fraction p of pixels of frame 1
        frames = np.zeros((5, 4, 4, 1))
        frames[1, 0, 0, 0] = 1.0  # p = 1/16
        p = 1 / 16
        n_odd = 2  # frames 1 and 3 are reconstructed
        assert motion_smoothness(frames) == pytest.approx(1.0 - p / n_odd)

    def test_two_frames_rejected(self):
        with pytest.raises(RangeError):
            motion_smoothness(np.zeros((2, 4, 4, 1)))

    def test_uniform_brightness_offset_invariant(self):
        rng = np.random.default_rng(14)
        clip = rng.random((6, 8, 8, 1)) * 0.5
        assert motion_smoothness(clip) == pytest.approx(
            motion_smoothness(clip + 0.3)
        )


class TestDynamicDegree:
    def test_static_clip_zero(self):
        clip = np.broadcast_to(RNG.random((16, 16, 1)), (5, 16, 16, 1)).copy()
        assert dynamic_degree(clip, GlobalShiftFlow(3)) == 0.0

    def test_uniform_translation_2px(self):
        base = RNG.random((24, 24, 1))
        frames = np.stack([np.roll(base, 2 * i, axis=1) for i in range(4)])
        assert dynamic_degree(frames, GlobalShiftFlow(5)) == pytest.approx(2.0)

    def test_scales_with_speed(self):
        base = RNG.random((24, 24, 1))
        one = np.stack([np.roll(base, i, axis=1) for i in range(4)])
        three = np.stack([np.roll(base, 3 * i, axis=1) for i in range(4)])
        d1 = dynamic_degree(one, GlobalShiftFlow(6))
        d3 = dynamic_degree(three, GlobalShiftFlow(6))
        assert d1 == pytest.approx(1.0)
        assert d3 == pytest.approx(3.0)

    def test_single_frame_rejected(self):
        with pytest.raises(RangeError):
            dynamic_degree(np.zeros((1, 4, 4, 1)), ConstantFlow(0, 0))


class TestFrameFidelity:
    def test_matching_endpoints_saturate(self):
        clip = RNG.random((5, 16, 16, 1)).astype(np.float32)
        out = frame_fidelity(clip, clip[0], clip[-1], EMB)
        assert out["psnr_first"] == 99.0
        assert out["psnr_last"] == 99.0
        assert out["ssim_first"] == pytest.approx(1.0)
        assert out["perceptual_first"] == 0.0

    def test_middle_frames_do_not_matter(self):
        clip = RNG.random((5, 16, 16, 1)).astype(np.float32)
        other = clip.copy()
        other[1:4] = RNG.random((3, 16, 16, 1))
        a = frame_fidelity(clip, clip[0], clip[-1], EMB)
        b = frame_fidelity(other, clip[0], clip[-1], EMB)
        assert a == b

    def test_noised_endpoint_is_20db(self):
        rng = np.random.default_rng(7)
        clip = np.stack([np.full((64, 64, 3), 0.5)] * 3)
        ref_first = np.clip(clip[0] + rng.normal(0, 0.1, clip[0].shape), 0, 1)
        out = frame_fidelity(clip, ref_first, clip[-1], EMB)
        assert out["psnr_first"] == pytest.approx(20.0, abs=0.2)

    def test_shape_mismatch_rejected(self):
        clip = np.zeros((3, 8, 8, 1))
        with pytest.raises(ShapeError):
            frame_fidelity(clip, np.zeros((4, 4, 1)), clip[-1], EMB)


@pytest.fixture(scope="module")
def probe():
    return fit_probe_on_synthetic(11, n_videos=200, height=32, width=32)


class TestSemanticFidelity:

    def test_own_caption_beats_shuffled(self, probe):
        cfg = SynthConfig(num_videos=1, frames_min=17, frames_max=17)
        clips = [synth_video(cfg, 999, i) for i in range(50)]
        wins = sum(
            semantic_fidelity(c, c.caption, probe)
            > semantic_fidelity(c, clips[(i + 17) % 50].caption, probe)
            for i, c in enumerate(clips)
        )
        assert wins / 50 >= 0.9

    def test_identical_embeddings_cosine_one(self, probe):
        cfg = SynthConfig(num_videos=1, frames_min=9, frames_max=9)
        clip = synth_video(cfg, 5, 0)
        v = probe.encode_video(clip)
        from semfi.conditioning import cosine_similarity

        assert cosine_similarity(v, v) == pytest.approx(1.0)

    def test_orthogonal_embeddings_cosine_zero(self):
        from semfi.conditioning import cosine_similarity

        assert cosine_similarity(
            np.array([1.0, 0.0]), np.array([0.0, 1.0])
        ) == pytest.approx(0.0)

    def test_zero_embedding_rejected(self):
        from semfi.conditioning import cosine_similarity

        with pytest.raises(DegenerateFeatureError):
            cosine_similarity(np.zeros(4), np.ones(4))

    def test_unfitted_probe_rejected(self):
        probe = JointProbeEmbedder(seed=0)
        with pytest.raises(StatisticsError):
            probe.encode_video(np.zeros((2, 8, 8, 3)))


class TestQualityStubs:
    def test_aesthetic_requires_predictor(self):
        with pytest.raises(PredictorNotConfigured, match="predictor not configured"):
            aesthetic_quality(np.zeros((2, 8, 8, 1)))

    def test_imaging_requires_predictor(self):
        with pytest.raises(PredictorNotConfigured, match="predictor not configured"):
            imaging_quality(np.zeros((2, 8, 8, 1)))

    def test_stub_with_predictor_averages(self):
        clip = np.stack([np.full((4, 4, 1), 0.2), np.full((4, 4, 1), 0.6)])
        assert aesthetic_quality(clip, predictor=lambda f: float(f.mean())) == (
            pytest.approx(0.4)
        )


class TestDistanceProperties:
    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10_000), sigma=st.floats(0.0, 0.3))
    def test_zero_on_identity_nonnegative_everywhere(self, seed, sigma):
        rng = np.random.default_rng(seed)
        a = rng.random((2, 8, 8, 1))
        b = np.clip(a + rng.normal(0, sigma, a.shape), 0, 1)
        d = perceptual_distance(a, b, EMB)
        assert d >= 0.0
        assert perceptual_distance(a, a, EMB) == 0.0
        assert psnr(a, a) == 99.0
