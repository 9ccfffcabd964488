"""Mixture-of-LoRA: one universal adapter plus frame-count experts.

Every covered layer gets a low-rank delta W + scale*B@A. The universal
adapter participates in every forward pass; exactly one expert joins it,
chosen by nearest frame count (ties broken toward the smaller count). At
init B is zero so fresh adapters are exact no-ops.

Layer names use '/' separators ("blocks/0/space_attn/qkv") because torch
ParameterDict keys cannot contain dots; factor keys append '/A' or '/B'.
"""

from __future__ import annotations

from typing import Iterable, Iterator, Mapping, Sequence

import torch
from torch import nn

from .errors import ConfigurationError, RangeError, ShapeError
from .rng import child_seed

DEFAULT_FRAME_COUNTS: tuple[int, ...] = (5, 9, 17, 33, 65, 81)

Factors = tuple[torch.Tensor, torch.Tensor, float]  # (A, B, scale)


def route(N: int, frame_counts: Sequence[int]) -> int:
    """Pick the expert frame count minimizing |N - s|, smaller s on ties."""
    if not frame_counts:
        raise ConfigurationError("cannot route over an empty frame-count set")
    if N < 2:
        raise RangeError(f"target frame count must be >= 2, got {N}")
    return min(frame_counts, key=lambda s: (abs(N - s), s))


class LoraAdapter(nn.Module):
    """One low-rank delta: per covered layer an A [rank, d_in], B [d_out, rank].

    scale = alpha / rank multiplies the product, matching the usual LoRA
    convention. B starts at zero, so the adapter contributes nothing until
    trained.
    """

    def __init__(
        self,
        layer_shapes: Mapping[str, tuple[int, int]],
        rank: int,
        seed: int,
        alpha: float | None = None,
        dtype: torch.dtype = torch.float32,
    ):
        super().__init__()
        if rank < 1:
            raise ConfigurationError(f"rank must be >= 1, got {rank}")
        self.rank = rank
        self.alpha = float(rank) if alpha is None else float(alpha)
        self.layer_names = tuple(layer_shapes)
        self.factors = nn.ParameterDict()
        for name, (d_out, d_in) in layer_shapes.items():
            if rank > min(d_in, d_out):
                raise ConfigurationError(
                    f"rank {rank} exceeds min dim of layer {name!r} "
                    f"({d_out}x{d_in})"
                )
            gen = torch.Generator().manual_seed(child_seed(seed, name, "A"))
            a = torch.randn(rank, d_in, generator=gen, dtype=dtype) / rank
            self.factors[f"{name}/A"] = nn.Parameter(a)
            self.factors[f"{name}/B"] = nn.Parameter(
                torch.zeros(d_out, rank, dtype=dtype)
            )

    @property
    def scale(self) -> float:
        return self.alpha / self.rank

    def layer_factors(self, name: str) -> Factors:
        return self.factors[f"{name}/A"], self.factors[f"{name}/B"], self.scale

    def delta(self, name: str) -> torch.Tensor:
        a, b, s = self.layer_factors(name)
        return s * (b @ a)

    def covers(self) -> tuple[str, ...]:
        return self.layer_names


class MoLState(nn.Module):
    """Universal adapter plus the expert map keyed by frame count."""

    def __init__(self, universal: LoraAdapter, experts: Mapping[int, LoraAdapter]):
        super().__init__()
        counts = tuple(experts)
        if counts and list(counts) != sorted(set(counts)):
            raise ConfigurationError(
                f"expert frame counts must be strictly increasing, got {counts}"
            )
        for s, exp in experts.items():
            if exp.covers() != universal.covers():
                raise ConfigurationError(
                    f"expert {s} covers different layers than the universal adapter"
                )
        self.universal = universal
        self.experts = nn.ModuleDict({str(s): e for s, e in experts.items()})
        self.frame_counts = counts

    @property
    def has_experts(self) -> bool:
        return bool(self.frame_counts)

    def expert(self, s: int) -> LoraAdapter:
        return self.experts[str(s)]

    def active_adapters(self, N: int) -> list[LoraAdapter]:
        """Universal plus the routed expert (universal only if no experts)."""
        if not self.has_experts:
            return [self.universal]
        return [self.universal, self.expert(route(N, self.frame_counts))]

    def active_factors(self, N: int) -> dict[str, list[Factors]]:
        """Per-layer (A, B, scale) lists for the adapters active at N."""
        active = self.active_adapters(N)
        return {
            name: [ad.layer_factors(name) for ad in active]
            for name in self.universal.covers()
        }

    def named_tensors(self) -> Iterator[tuple[str, torch.Tensor]]:
        """Canonical checkpoint names: mol/universal/... and mol/expert_<s>/..."""
        for key, p in self.universal.factors.items():
            yield f"mol/universal/{key}", p
        for s in self.frame_counts:
            for key, p in self.expert(s).factors.items():
                yield f"mol/expert_{s}/{key}", p


def init_adapter(
    layer_shapes: Mapping[str, tuple[int, int]],
    rank: int,
    seed: int,
    alpha: float | None = None,
    dtype: torch.dtype = torch.float32,
) -> LoraAdapter:
    """Fresh adapter: A seeded Gaussian with std 1/rank, B all-zero."""
    return LoraAdapter(layer_shapes, rank, seed, alpha=alpha, dtype=dtype)


def create_mol_state(
    layer_shapes: Mapping[str, tuple[int, int]],
    rank: int,
    seed: int,
    frame_counts: Sequence[int] = DEFAULT_FRAME_COUNTS,
    alpha: float | None = None,
    enable_experts: bool = True,
    dtype: torch.dtype = torch.float32,
) -> MoLState:
    """Build the universal adapter and (optionally) one expert per count."""
    universal = init_adapter(
        layer_shapes, rank, child_seed(seed, "universal"), alpha=alpha, dtype=dtype
    )
    experts: dict[int, LoraAdapter] = {}
    if enable_experts:
        for s in frame_counts:
            experts[s] = init_adapter(
                layer_shapes, rank, child_seed(seed, "expert", s),
                alpha=alpha, dtype=dtype,
            )
    return MoLState(universal, experts)


def effective_delta(mol: MoLState, N: int) -> dict[str, torch.Tensor]:
    """Combined per-layer delta of the adapters active at frame count N."""
    active = mol.active_adapters(N)
    for ad in active:
        if ad.covers() != mol.universal.covers():
            raise ConfigurationError("adapter layer coverage mismatch")
    out: dict[str, torch.Tensor] = {}
    for name in mol.universal.covers():
        total = None
        for ad in active:
            d = ad.delta(name)
            total = d if total is None else total + d
        out[name] = total
    return out


def apply_lora(
    base_weight: torch.Tensor, delta: torch.Tensor, x: torch.Tensor
) -> torch.Tensor:
    """Merged application: (W + delta) @ x with x treated as column(s)."""
    if base_weight.shape != delta.shape:
        raise ShapeError(
            f"delta shape {tuple(delta.shape)} != weight shape "
            f"{tuple(base_weight.shape)}"
        )
    if base_weight.shape[1] != x.shape[0]:
        raise ShapeError(
            f"weight expects input dim {base_weight.shape[1]}, got {x.shape[0]}"
        )
    return (base_weight + delta) @ x


def apply_unmerged(
    base_weight: torch.Tensor, factors: Iterable[Factors], x: torch.Tensor
) -> torch.Tensor:
    """Factored application: W @ x + sum_i scale_i * B_i @ (A_i @ x)."""
    if base_weight.shape[1] != x.shape[0]:
        raise ShapeError(
            f"weight expects input dim {base_weight.shape[1]}, got {x.shape[0]}"
        )
    y = base_weight @ x
    for a, b, s in factors:
        y = y + s * (b @ (a @ x))
    return y


def trainable_parameters(mol: MoLState, N: int) -> list[nn.Parameter]:
    """Parameters the optimizer may touch for a batch at frame count N.

    Universal plus the routed expert; every other expert is excluded so a
    step at one scale cannot drift the others.
    """
    params: list[nn.Parameter] = []
    for ad in mol.active_adapters(N):
        params.extend(ad.factors.values())
    return params
