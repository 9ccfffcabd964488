import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from semfi.errors import ConfigurationError, ShapeError
from semfi.mol import (
    DEFAULT_FRAME_COUNTS,
    MoLState,
    apply_lora,
    apply_unmerged,
    create_mol_state,
    effective_delta,
    init_adapter,
    route,
    trainable_parameters,
)


def brute_force_route(n, counts):
    """Independent oracle: scan every candidate, track (distance, s) minimum."""
    best = None
    for s in counts:
        key = (abs(n - s), s)
        if best is None or key < best:
            best = key
    return best[1]


class TestRoute:
    def test_exact_member(self):
        assert route(9, DEFAULT_FRAME_COUNTS) == 9

    def test_beyond_largest(self):
        assert brute_force_route(100, DEFAULT_FRAME_COUNTS) == 81
        assert route(100, DEFAULT_FRAME_COUNTS) == 81

    def test_tie_breaks_to_smaller(self):
        # |25-17| == |25-33| == 8
        assert brute_force_route(25, DEFAULT_FRAME_COUNTS) == 17
        assert route(25, DEFAULT_FRAME_COUNTS) == 17

    def test_oracle_equivalence_2_to_200(self):
        for n in range(2, 201):
            assert route(n, DEFAULT_FRAME_COUNTS) == brute_force_route(
                n, DEFAULT_FRAME_COUNTS
            )

    def test_members_route_to_themselves(self):
        for s in DEFAULT_FRAME_COUNTS:
            assert route(s, DEFAULT_FRAME_COUNTS) == s

    def test_empty_set_rejected(self):
        with pytest.raises(ConfigurationError):
            route(10, ())

    @settings(max_examples=60, deadline=None)
    @given(
        n=st.integers(min_value=2, max_value=500),
        counts=st.lists(
            st.integers(min_value=2, max_value=400), min_size=1, max_size=8,
            unique=True,
        ),
    )
    def test_total_and_matches_oracle(self, n, counts):
        counts = tuple(sorted(counts))
        s = route(n, counts)
        assert s in counts
        assert s == brute_force_route(n, counts)


SHAPES = {"layer_a": (8, 6), "layer_b": (4, 4)}


class TestInitAdapter:
    def test_rank16_shapes_and_zero_b(self):
        ad = init_adapter({"w": (64, 64)}, rank=16, seed=0)
        a, b, _ = ad.layer_factors("w")
        assert tuple(a.shape) == (16, 64)
        assert tuple(b.shape) == (64, 16)
        assert float(b.detach().abs().sum()) == 0.0

    def test_same_seed_identical(self):
        a1 = init_adapter(SHAPES, rank=2, seed=5)
        a2 = init_adapter(SHAPES, rank=2, seed=5)
        for name in SHAPES:
            assert torch.equal(a1.layer_factors(name)[0], a2.layer_factors(name)[0])

    def test_different_seed_differs(self):
        a1 = init_adapter(SHAPES, rank=2, seed=5)
        a2 = init_adapter(SHAPES, rank=2, seed=6)
        assert not torch.equal(
            a1.layer_factors("layer_a")[0], a2.layer_factors("layer_a")[0]
        )

    def test_fresh_adapter_is_noop(self):
        ad = init_adapter(SHAPES, rank=2, seed=5)
        x = torch.randn(6, 3)
        w = torch.randn(8, 6)
        out = apply_unmerged(w, [ad.layer_factors("layer_a")], x)
        torch.testing.assert_close(out, w @ x, rtol=0, atol=0)

    def test_rank_too_large_rejected(self):
        with pytest.raises(ConfigurationError):
            init_adapter(SHAPES, rank=5, seed=0)

    def test_rank_below_one_rejected(self):
        with pytest.raises(ConfigurationError):
            init_adapter(SHAPES, rank=0, seed=0)


class TestEffectiveDelta:
    def _mol(self, rank=1):
        return create_mol_state(SHAPES, rank=rank, seed=2, frame_counts=(5, 9))

    def test_zero_experts_reduce_to_universal(self):
        mol = self._mol()
        with torch.no_grad():
            mol.universal.factors["layer_a/B"].copy_(torch.randn(8, 1))
        delta = effective_delta(mol, 5)
        torch.testing.assert_close(delta["layer_a"], mol.universal.delta("layer_a"))

    def test_all_zero_b_gives_zero_delta(self):
        delta = effective_delta(self._mol(), 9)
        for name in SHAPES:
            assert float(delta[name].detach().abs().sum()) == 0.0

    def test_rank1_outer_product_sum_matches_hand_computation(self):
        shapes = {"w": (2, 2)}
        mol = create_mol_state(shapes, rank=1, seed=0, frame_counts=(5,))
        with torch.no_grad():
            mol.universal.factors["w/A"].copy_(torch.tensor([[1.0, 2.0]]))
            mol.universal.factors["w/B"].copy_(torch.tensor([[3.0], [4.0]]))
            mol.expert(5).factors["w/A"].copy_(torch.tensor([[-1.0, 0.5]]))
            mol.expert(5).factors["w/B"].copy_(torch.tensor([[2.0], [0.0]]))
        # scale is alpha/rank = 1; delta = B_U A_U + B_E A_E computed by hand:
        # [[3],[4]]@[[1,2]] = [[3,6],[4,8]];  [[2],[0]]@[[-1,.5]] = [[-2,1],[0,0]]
        expected = torch.tensor([[1.0, 7.0], [4.0, 8.0]])
        torch.testing.assert_close(effective_delta(mol, 5)["w"], expected,
                                   rtol=0, atol=1e-6)

    def test_exactly_one_expert_contributes(self):
        mol = self._mol()
        with torch.no_grad():
            for s in (5, 9):
                mol.expert(s).factors["layer_a/B"].fill_(float(s))
        delta_5 = effective_delta(mol, 5)["layer_a"]
        expected = mol.universal.delta("layer_a") + mol.expert(5).delta("layer_a")
        torch.testing.assert_close(delta_5, expected)

    def test_coverage_mismatch_rejected(self):
        universal = init_adapter(SHAPES, rank=1, seed=0)
        stray = init_adapter({"layer_a": (8, 6)}, rank=1, seed=1)
        with pytest.raises(ConfigurationError):
            MoLState(universal, {5: stray})


class TestApplyLora:
    def test_zero_delta_identity(self):
        w = torch.randn(6, 4)
        x = torch.randn(4)
        torch.testing.assert_close(
            apply_lora(w, torch.zeros(6, 4), x), w @ x, rtol=0, atol=0
        )

    def test_merged_vs_unmerged_16x16(self):
        gen = torch.Generator().manual_seed(0)
        w = torch.randn(16, 16, generator=gen)
        ad = init_adapter({"w": (16, 16)}, rank=4, seed=3)
        with torch.no_grad():
            ad.factors["w/B"].copy_(torch.randn(16, 4, generator=gen))
        x = torch.randn(16, generator=gen)
        merged = apply_lora(w, ad.delta("w"), x)
        unmerged = apply_unmerged(w, [ad.layer_factors("w")], x)
        rel = float(((merged - unmerged).norm() / merged.norm()).detach())
        assert rel < 1e-5

    def test_zero_input_gives_zero(self):
        w = torch.randn(6, 4)
        out = apply_lora(w, torch.randn(6, 4), torch.zeros(4))
        assert float(out.abs().sum()) == 0.0

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            apply_lora(torch.randn(6, 4), torch.randn(5, 4), torch.randn(4))
        with pytest.raises(ShapeError):
            apply_lora(torch.randn(6, 4), torch.randn(6, 4), torch.randn(3))


class TestTrainableParameters:
    def test_routed_expert_plus_universal_only(self):
        mol = create_mol_state(SHAPES, rank=1, seed=0)
        params = set(map(id, trainable_parameters(mol, 5)))
        expected = set(map(id, mol.universal.factors.values())) | set(
            map(id, mol.expert(5).factors.values())
        )
        assert params == expected

    def test_n70_routes_to_65(self):
        assert brute_force_route(70, DEFAULT_FRAME_COUNTS) == 65
        mol = create_mol_state(SHAPES, rank=1, seed=0)
        params = set(map(id, trainable_parameters(mol, 70)))
        assert set(map(id, mol.expert(65).factors.values())) <= params
        assert not set(map(id, mol.expert(81).factors.values())) & params

    def test_experts_disabled_gives_universal_only(self):
        mol = create_mol_state(SHAPES, rank=1, seed=0, enable_experts=False)
        params = set(map(id, trainable_parameters(mol, 5)))
        assert params == set(map(id, mol.universal.factors.values()))


class TestMergedUnmergedProperty:
    @settings(max_examples=25, deadline=None)
    @given(
        d_in=st.integers(min_value=2, max_value=24),
        d_out=st.integers(min_value=2, max_value=24),
        seed=st.integers(min_value=0, max_value=10_000),
    )
    def test_equivalence_random_layers(self, d_in, d_out, seed):
        rank = min(2, d_in, d_out)
        gen = torch.Generator().manual_seed(seed)
        w = torch.randn(d_out, d_in, generator=gen)
        ad = init_adapter({"w": (d_out, d_in)}, rank=rank, seed=seed)
        with torch.no_grad():
            ad.factors["w/B"].copy_(torch.randn(d_out, rank, generator=gen))
        x = torch.randn(d_in, generator=gen)
        merged = apply_lora(w, ad.delta("w"), x).detach()
        unmerged = apply_unmerged(w, [ad.layer_factors("w")], x).detach()
        denom = float(merged.norm()) or 1.0
        assert float((merged - unmerged).norm()) / denom < 1e-5


class TestMoLStateValidation:
    def test_unsorted_expert_keys_rejected(self):
        universal = init_adapter(SHAPES, rank=1, seed=0)
        e1 = init_adapter(SHAPES, rank=1, seed=1)
        e2 = init_adapter(SHAPES, rank=1, seed=2)
        with pytest.raises(ConfigurationError):
            MoLState(universal, dict([(9, e1), (5, e2)]))

    def test_checkpoint_namespace(self):
        mol = create_mol_state(SHAPES, rank=1, seed=0, frame_counts=(5, 9))
        names = [name for name, _ in mol.named_tensors()]
        assert all(
            n.startswith("mol/universal/") or n.startswith("mol/expert_")
            for n in names
        )
        assert "mol/expert_5/layer_a/A" in names
        assert "mol/universal/layer_b/B" in names
