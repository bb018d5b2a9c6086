"""Baseline subnetwork construction: one-shot and iterative pruning.

Selection is either uniform-random or smallest-L1-magnitude, at layerwise or
global granularity. One-shot masks are produced by a single increment from
the all-ones mask, so a one-epoch iterative run is *identical* to one-shot
under the same seed, not merely equal in distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .masks import MaskSet, full_mask

RANDOM = "random"
MAGNITUDE = "magnitude"
LAYERWISE = "layerwise"
GLOBAL = "global"


class SeveredLayerError(ValueError):
    """A pruning quota would leave a layer with no active weights."""


@dataclass(frozen=True)
class PruneSpec:
    selector: str
    target_sparsity: float
    granularity: str = LAYERWISE

    def __post_init__(self):
        if self.selector not in (RANDOM, MAGNITUDE):
            raise ValueError(f"unknown selector {self.selector!r}")
        if self.granularity not in (LAYERWISE, GLOBAL):
            raise ValueError(f"unknown granularity {self.granularity!r}")
        if not 0.0 <= self.target_sparsity < 1.0:
            raise ValueError("target_sparsity must lie in [0, 1)")


def _round_half_away(x: float) -> int:
    return int(np.floor(x + 0.5))


def _quota(n: int, level: float) -> int:
    q = _round_half_away(level * n)
    if q >= n:
        raise SeveredLayerError(
            f"sparsity {level} would remove all {n} weights of a layer")
    return q


def _active_order(active_idx: np.ndarray, values: np.ndarray | None,
                  selector: str, rng: np.random.Generator | None,
                  count: int) -> np.ndarray:
    """Flat indices of the next ``count`` entries to prune among the active."""
    if count == 0:
        return np.empty(0, dtype=np.intp)
    if selector == RANDOM:
        if rng is None:
            raise ValueError("random selection needs an rng")
        return rng.choice(active_idx, size=count, replace=False)
    if values is None:
        raise ValueError("magnitude selection needs parameter values")
    mags = np.abs(values.reshape(-1)[active_idx])
    # stable sort: ties go to the lower flat index
    order = np.argsort(mags, kind="stable")
    return active_idx[order[:count]]


def prune_increment(current: MaskSet, next_level: float, spec: PruneSpec,
                    params: dict | None = None,
                    rng: np.random.Generator | None = None) -> MaskSet:
    """Prune additional active entries until ``next_level`` sparsity is met.

    Previously pruned entries stay pruned; raises if ``next_level`` is below
    the current sparsity or if any layer would be fully severed.
    """
    if not 0.0 <= next_level < 1.0:
        raise ValueError("next_level must lie in [0, 1)")
    new_masks = {name: m.copy() for name, m in current.items()}

    if spec.granularity == LAYERWISE:
        for name, m in new_masks.items():
            flat = m.reshape(-1)
            target = _quota(flat.size, next_level)
            have = int(flat.size - flat.sum())
            if target < have:
                raise ValueError(
                    f"{name}: next level {next_level} is below current sparsity")
            active = np.flatnonzero(flat)
            vals = params[name] if params is not None else None
            chosen = _active_order(active, vals, spec.selector, rng, target - have)
            flat[chosen] = 0
    else:
        sizes = {name: m.size for name, m in new_masks.items()}
        total = sum(sizes.values())
        target = _quota(total, next_level)
        have = sum(int(m.size - m.sum()) for m in new_masks.values())
        if target < have:
            raise ValueError(f"next level {next_level} is below current sparsity")
        flat = np.concatenate([m.reshape(-1) for m in new_masks.values()])
        active = np.flatnonzero(flat)
        vals = None
        if params is not None:
            vals = np.concatenate(
                [np.asarray(params[name]).reshape(-1) for name in new_masks])
        chosen = _active_order(active, vals, spec.selector, rng, target - have)
        flat[chosen] = 0
        offset = 0
        for name, m in new_masks.items():
            m[...] = flat[offset:offset + sizes[name]].reshape(m.shape)
            offset += sizes[name]
        for name, m in new_masks.items():
            if m.sum() == 0:
                raise SeveredLayerError(
                    f"global quota fully severed layer {name!r}")
    return MaskSet(new_masks)


def random_mask(shapes: dict, spec: PruneSpec,
                rng: np.random.Generator) -> MaskSet:
    """One-shot random mask at the requested target sparsity."""
    if spec.selector != RANDOM:
        raise ValueError("random_mask requires the random selector")
    return prune_increment(full_mask(shapes), spec.target_sparsity, spec, rng=rng)


def magnitude_mask(params: dict, spec: PruneSpec) -> MaskSet:
    """One-shot mask that prunes the smallest-|w| entries."""
    if spec.selector != MAGNITUDE:
        raise ValueError("magnitude_mask requires the magnitude selector")
    shapes = {name: np.asarray(p).shape for name, p in params.items()}
    return prune_increment(full_mask(shapes), spec.target_sparsity, spec,
                           params=params)


def make_iterative_schedule(rho: float, phi: int) -> list:
    """Equal sparsity increments: rho*k/phi for k = 1..phi, ending exactly
    at rho."""
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1)")
    if phi < 1:
        raise ValueError("phi must be a positive integer")
    levels = [rho * k / phi for k in range(1, phi)]
    levels.append(rho)
    return levels
