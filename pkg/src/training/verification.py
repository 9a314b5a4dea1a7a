"""
Self-verification suites.

Each suite returns CheckResults; run_verification collects them into a
SuiteReport. Gradient checks always run in float64; the round-trip checks
use the requested precision and its tolerance.
"""
import logging
import math
import time
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from ..autodiff import Op, StoragePolicy, check_directional, check_op, max_relative_error, profile_memory
from ..layers import (
    ChannelConcat,
    ChannelSplit,
    Conv3d,
    CouplingBlock,
    GlobalAvgPool,
    Initializer,
    InstanceNorm,
    InvertibleDownsample,
    InvertibleUpsample,
    LeakyReLU,
    Linear,
    MaxPool3d,
    Reshape,
    ResidualBlock,
    Softmax,
    TrilinearUpsample,
    make_down_transition,
    make_up_transition,
)
from ..losses import cross_entropy_loss, dice_loss, kl_loss, l2_recon_loss, one_hot
from ..models import Architecture, ChainKind, ModelSpec, build_chain, build_model
from ..tensor import Precision, pixel_shuffle3d, pixel_unshuffle3d
from ..utils import get_settings
from .reports import CheckResult, SuiteReport

logger = logging.getLogger(__name__)

ROUND_TRIP_TOL = {Precision.F64: 1e-11, Precision.F32: 1e-5}
GRAD_EQUIVALENCE_TOL = 1e-8
FD_SEEDS = (0, 1, 2)
CHAIN_LENGTHS = (1, 2, 4, 8, 16)


def _timed(name: str, fn: Callable[[], Tuple[bool, str]]) -> CheckResult:
    start = time.perf_counter()
    try:
        passed, detail = fn()
    except Exception as exc:
        logger.error(f"Check {name} raised: {exc}", exc_info=True)
        passed, detail = False, f"{type(exc).__name__}: {exc}"
    result = CheckResult(name=name, passed=passed, detail=detail, seconds=time.perf_counter() - start)
    if not passed:
        logger.warning(f"❌ {name}: {detail}")
    return result


# ============================================
# Invertibility
# ============================================

def invertibility_suite(precision: Precision = Precision.F64, trials: int = 100, seed: int = 0) -> List[CheckResult]:
    """Coupling and resampling round trips x -> inverse(forward(x))."""
    tol = ROUND_TRIP_TOL[precision]
    rng = np.random.default_rng(seed)

    def coupling() -> Tuple[bool, str]:
        worst = 0.0
        for trial in range(trials):
            channels = 2 * int(rng.integers(1, 9))
            depth = int(rng.integers(1, 5))
            extent = int(rng.integers(2, 9))
            batch = int(rng.integers(1, 3))
            block = CouplingBlock(f"rt{trial}", channels, Initializer(seed + trial, precision), depth=depth, zero_init=False)
            x = rng.standard_normal((batch, channels, extent, extent, extent)).astype(precision.dtype)
            worst = max(worst, float(np.abs(x - block.inverse(block(x))).max()))
        return worst <= tol, f"max |x - inv(f(x))| = {worst:.3e} over {trials} blocks (tol {tol:g})"

    def resampling() -> Tuple[bool, str]:
        worst = 0.0
        init = Initializer(seed, precision)
        for trial in range(max(1, trials // 10)):
            channels = int(rng.integers(1, 4))
            down = InvertibleDownsample(f"down{trial}", channels, init)
            up = InvertibleUpsample(f"up{trial}", channels, init)
            x = rng.standard_normal((1, channels, 4, 4, 4)).astype(precision.dtype)
            z = rng.standard_normal((1, 8 * channels, 2, 2, 2)).astype(precision.dtype)
            worst = max(worst, float(np.abs(x - down.inverse(down(x))).max()))
            worst = max(worst, float(np.abs(z - up.inverse(up(z))).max()))
        return worst <= tol, f"max round-trip error {worst:.3e} (tol {tol:g})"

    return [
        _timed("invertibility/coupling", coupling),
        _timed("invertibility/resampling", resampling),
    ]


def shuffle_suite(trials: int = 100, seed: int = 0) -> List[CheckResult]:
    """Pixel shuffle and unshuffle are exact inverses (bit-identical)."""
    rng = np.random.default_rng(seed)

    def bijective() -> Tuple[bool, str]:
        for _ in range(trials):
            n, c = (int(v) for v in rng.integers(1, 4, size=2))
            d, h, w = (2 * int(v) for v in rng.integers(1, 5, size=3))
            x = rng.standard_normal((n, c, d, h, w))
            z = rng.standard_normal((n, 8 * c, d, h, w))
            if not np.array_equal(pixel_shuffle3d(pixel_unshuffle3d(x)), x):
                return False, f"shuffle(unshuffle(x)) != x for shape {x.shape}"
            if not np.array_equal(pixel_unshuffle3d(pixel_shuffle3d(z)), z):
                return False, f"unshuffle(shuffle(z)) != z for shape {z.shape}"
        return True, f"{trials} tensors exact"

    return [_timed("shuffle/bijective", bijective)]


# ============================================
# Gradient equivalence across storage regimes
# ============================================

def _toy_spec(arch: Architecture, seed: int) -> ModelSpec:
    return ModelSpec(
        arch=arch,
        in_channels=2,
        num_classes=3,
        levels=2,
        base_width=4,
        blocks_per_level=1,
        patch_size=16,
        zero_init=False,
        seed=seed,
        precision=Precision.F64,
    )


def gradient_equivalence_suite(seed: int = 0) -> List[CheckResult]:
    """Parameter gradients under Invertible and Checkpoint match Store."""
    results = []
    for arch in (Architecture.PARTIALLY_INVRES, Architecture.FULLY_INVRES):
        def compare(arch: Architecture = arch) -> Tuple[bool, str]:
            model = build_model(_toy_spec(arch, seed))
            rng = np.random.default_rng(seed)
            x = rng.standard_normal((1, 2, 16, 16, 16))
            grad_out = rng.standard_normal((1, 3, 16, 16, 16))

            def run(regime: StoragePolicy) -> Dict[str, np.ndarray]:
                model.forward(x, regime=regime)
                grads = model.backward(grad_out)
                return {name: g.copy() for name, g in grads.params.items()} | {"<input>": grads.inputs[0].copy()}

            reference = run(StoragePolicy.STORE)
            worst, where = 0.0, ""
            for regime in (StoragePolicy.INVERTIBLE, StoragePolicy.CHECKPOINT):
                for name, grad in run(regime).items():
                    err = max_relative_error(grad, reference[name])
                    if err > worst:
                        worst, where = err, f"{regime.value}:{name}"
            detail = f"max relative error {worst:.3e}" + (f" at {where}" if where else "")
            return worst <= GRAD_EQUIVALENCE_TOL, detail

        results.append(_timed(f"gradients/{arch.value}", compare))
    return results


# ============================================
# Finite differences
# ============================================

def _layer_cases(seed: int) -> List[Tuple[str, Op, List[np.ndarray]]]:
    rng = np.random.default_rng(seed)
    init = Initializer(seed, Precision.F64)

    def randn(*shape: int) -> np.ndarray:
        return rng.standard_normal(shape)

    return [
        ("conv3d", Conv3d("fd.conv", 2, 3, init), [randn(1, 2, 4, 4, 4)]),
        ("conv3d_stride2", Conv3d("fd.conv_s2", 2, 2, init, stride=2), [randn(1, 2, 5, 5, 5)]),
        ("instance_norm", InstanceNorm("fd.norm", 2, init), [randn(2, 2, 3, 3, 3)]),
        ("leaky_relu", LeakyReLU(), [randn(1, 2, 3, 3, 3)]),
        ("max_pool", MaxPool3d(), [randn(1, 2, 4, 4, 4)]),
        ("trilinear", TrilinearUpsample(), [randn(1, 2, 2, 3, 2)]),
        ("softmax", Softmax(), [randn(1, 3, 2, 2, 2)]),
        ("linear", Linear("fd.linear", 4, 3, init), [randn(2, 4)]),
        ("global_avg_pool", GlobalAvgPool(), [randn(2, 3, 2, 2, 2)]),
        ("reshape", Reshape((2, 2, 2, 2)), [randn(1, 16)]),
        ("coupling", CouplingBlock("fd.coupling", 4, init, depth=2, zero_init=False), [randn(1, 4, 4, 4, 4)]),
        ("residual", ResidualBlock("fd.residual", 2, init), [randn(1, 2, 4, 4, 4)]),
        ("invertible_down", InvertibleDownsample("fd.down", 2, init), [randn(1, 2, 4, 4, 4)]),
        ("invertible_up", InvertibleUpsample("fd.up", 2, init), [randn(1, 16, 2, 2, 2)]),
        ("down_transition", make_down_transition("fd.pool", 2, 4, init), [randn(1, 2, 4, 4, 4)]),
        ("up_transition", make_up_transition("fd.interp", 4, 2, init), [randn(1, 4, 2, 2, 2)]),
        ("split", ChannelSplit(1), [randn(1, 3, 2, 2, 2)]),
        ("concat", ChannelConcat(2), [randn(1, 2, 2, 2, 2), randn(1, 1, 2, 2, 2)]),
    ]


def _loss_checks(seed: int):
    rng = np.random.default_rng(seed)
    logits = rng.standard_normal((1, 3, 3, 3, 3))
    probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    target = one_hot(rng.integers(0, 3, size=(1, 3, 3, 3)), 3, dtype=np.float64)
    mu, logvar = 0.5 * rng.standard_normal((2, 4)), 0.5 * rng.standard_normal((2, 4))
    recon, image = rng.standard_normal((1, 2, 3, 3, 3)), rng.standard_normal((1, 2, 3, 3, 3))
    voxels = 27

    yield "dice", lambda p: dice_loss(p, target).value, probs, dice_loss(probs, target).grad
    yield "cross_entropy", lambda p: cross_entropy_loss(p, target).value, probs, cross_entropy_loss(probs, target).grad
    yield "l2", lambda r: l2_recon_loss(r, image).value, recon, l2_recon_loss(recon, image).grad
    kl_grad = kl_loss(mu, logvar, voxels).grad
    yield "kl_mu", lambda m: kl_loss(m, logvar, voxels).value, mu, kl_grad[0]
    yield "kl_logvar", lambda lv: kl_loss(mu, lv, voxels).value, logvar, kl_grad[1]


def finite_difference_suite(seeds: Sequence[int] = FD_SEEDS) -> List[CheckResult]:
    """Central differences (h=1e-5, rel <= 1e-6) for every layer and loss."""
    worst: Dict[str, List] = {}

    def record(case: str, passed: bool, err: float, what: str) -> None:
        entry = worst.setdefault(case, [0.0, "", True])
        if not passed and entry[2]:
            worst[case] = [err, what, False]
        elif passed == entry[2] and err >= entry[0]:
            worst[case] = [err, what, entry[2]]

    for seed in seeds:
        for case, op, inputs in _layer_cases(seed):
            for result in check_op(op, inputs, seed=seed):
                record(f"fd/{case}", result.passed, result.rel_error, f"{result.name} seed {seed}")
        rng = np.random.default_rng(seed + 1000)
        for case, f, x, grad in _loss_checks(seed):
            result = check_directional(case, f, x, grad, rng)
            record(f"fd/loss_{case}", result.passed, result.rel_error, f"seed {seed}")

    return [
        CheckResult(name=case, passed=passed, detail=f"worst rel error {err:.2e} ({what})")
        for case, (err, what, passed) in worst.items()
    ]


# ============================================
# Memory regimes
# ============================================

def checkpoint_budget(length: int, boundary: int, block: int) -> int:
    """
    Peak stored scalars of a checkpointed chain of identical blocks.

    Segments hold ceil(sqrt(L)) blocks; with m segments the peak is
    max(m A, max_j (j A + len_j B)), j = 0 for the first segment.
    """
    size = math.isqrt(length - 1) + 1
    lengths = [min(size, length - start) for start in range(0, length, size)]
    inner = max((j * boundary + n * block) for j, n in enumerate(lengths))
    return max(len(lengths) * boundary, inner)


def memory_suite(
    channels: int = 4,
    extent: int = 4,
    lengths: Sequence[int] = CHAIN_LENGTHS,
    seed: int = 0,
    ordering: bool = True,
) -> List[CheckResult]:
    """Chain scaling per regime, and model ordering Fully < Partially < Baseline."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((1, channels, extent, extent, extent))
    peaks: Dict[StoragePolicy, Dict[int, int]] = {p: {} for p in StoragePolicy}
    for length in lengths:
        tape = build_chain(ChainKind.COUPLING, length, channels, seed=seed)
        for policy in StoragePolicy:
            peaks[policy][length] = profile_memory(tape, policy, x).peak_stored_scalars

    def invertible_constant() -> Tuple[bool, str]:
        values = sorted(set(peaks[StoragePolicy.INVERTIBLE].values()))
        return len(values) == 1, f"invertible peaks {peaks[StoragePolicy.INVERTIBLE]}"

    def store_affine() -> Tuple[bool, str]:
        store = peaks[StoragePolicy.STORE]
        ls = sorted(store)
        slopes = {(store[b] - store[a]) / (b - a) for a, b in zip(ls, ls[1:])}
        ok = len(slopes) == 1 and next(iter(slopes)) > 0
        return ok, f"store peaks {store}"

    def checkpoint_sqrt() -> Tuple[bool, str]:
        block = peaks[StoragePolicy.STORE][1] if 1 in peaks[StoragePolicy.STORE] else None
        if block is None:
            return False, "needs the L=1 store peak as the per-block size"
        details = []
        ok = True
        for length in (4, 16):
            if length not in peaks[StoragePolicy.CHECKPOINT]:
                continue
            expected = checkpoint_budget(length, x.size, block)
            actual = peaks[StoragePolicy.CHECKPOINT][length]
            ok &= expected == actual
            details.append(f"L={length}: {actual} (budget {expected})")
        return ok, ", ".join(details)

    results = [
        _timed("memory/invertible_constant", invertible_constant),
        _timed("memory/store_affine", store_affine),
        _timed("memory/checkpoint_sqrt", checkpoint_sqrt),
    ]
    if ordering:
        results.append(_timed("memory/model_ordering", lambda: _model_ordering(seed)))
    return results


def _model_ordering(seed: int, gap: float = 0.10) -> Tuple[bool, str]:
    spec = ModelSpec(in_channels=2, num_classes=4, levels=3, base_width=8, patch_size=32, seed=seed)
    x = np.random.default_rng(seed).standard_normal((1, 2, 32, 32, 32)).astype(np.float32)
    peaks = {}
    for arch in (Architecture.FULLY_INVRES, Architecture.PARTIALLY_INVRES, Architecture.BASELINE):
        model = build_model(spec.model_copy(update={"arch": arch}))
        peaks[arch.value] = profile_memory(model.tape, StoragePolicy.INVERTIBLE, x).peak_stored_scalars
    fully, partially, baseline = peaks.values()
    ok = fully < (1 - gap) * partially and partially < (1 - gap) * baseline
    return ok, ", ".join(f"{k}={v:,}" for k, v in peaks.items())


# ============================================
# Runner
# ============================================

SUITES = ("invertibility", "shuffle", "gradients", "finite_differences", "memory")


def run_verification(
    precision: Precision = Precision.F64,
    suites: Optional[Sequence[str]] = None,
    seed: int = 0,
    show_progress: Optional[bool] = None,
) -> SuiteReport:
    """
    Run the selected suites (all by default).

    Raises:
        ValueError: For an unknown suite name
    """
    precision = Precision(precision)
    selected = list(suites or SUITES)
    unknown = sorted(set(selected) - set(SUITES))
    if unknown:
        raise ValueError(f"Unknown verification suites {unknown}, expected a subset of {list(SUITES)}")
    runners: Dict[str, Callable[[], List[CheckResult]]] = {
        "invertibility": lambda: invertibility_suite(precision, seed=seed),
        "shuffle": lambda: shuffle_suite(seed=seed),
        "gradients": lambda: gradient_equivalence_suite(seed=seed),
        "finite_differences": lambda: finite_difference_suite(),
        "memory": lambda: memory_suite(seed=seed),
    }
    show = get_settings().show_progress if show_progress is None else show_progress
    report = SuiteReport(precision=precision)
    for name in tqdm(selected, desc="Verifying", disable=not show):
        logger.info(f"Running {name} checks")
        report.checks.extend(runners[name]())
    if report.passed:
        logger.info(f"✅ All {len(report.checks)} checks passed")
    else:
        logger.error(f"{len(report.failures)} of {len(report.checks)} checks failed")
    return report
