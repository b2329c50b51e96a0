"""The full finite-difference gradient suite.

Every operator and composite block is checked against 64-bit central
differences at max relative error 1e-4, over multiple random seeds, on
small shapes chosen so the whole suite stays well under its time budget.
Inputs are drawn bounded away from nondifferentiable points (relu kinks,
max ties); those points get dedicated exclusion tests in the test suite.
"""

from __future__ import annotations

import math
import time
import zlib
from typing import Callable

import numpy as np

from .model.bdc import BdcStage, ChannelAttention, SpatialAttention
from .model.detector import DetectionHead, compute_loss, encode_targets
from .model.encoder import BasicBlock, ResidualStage
from .model.etma import Etma, EtmaConfig
from .nn import Module, Tensor, grad_check
from .nn import functional as F
from .nn.modules import BatchNorm2d

TOL = 1e-4
STEP = 1e-5


def _leaf(rng: np.random.Generator, shape, name: str, low: float = 0.25, high: float = 1.5) -> Tensor:
    """Float64 leaf with |values| in [low, high): clear of relu/max kinks."""
    mag = rng.uniform(low, high, size=shape)
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    t = Tensor(mag * sign, requires_grad=True, name=name)
    return t


def _prep(module: Module, prefix: str) -> list[Tensor]:
    module.astype(np.float64)
    params = []
    for name, p in module.named_parameters():
        p.name = f"{prefix}.{name}"
        params.append(p)
    return params


def _smooth_scalar(y: Tensor) -> Tensor:
    return F.tmean(F.mul(y, F.sigmoid(y)))


CheckBuilder = Callable[[np.random.Generator], tuple[Callable[[], Tensor], list[Tensor]]]


def _check_conv(stride: int, pad: int, kernel: int) -> CheckBuilder:
    def build(rng):
        x = _leaf(rng, (2, 3, 6, 6), "x")
        w = _leaf(rng, (4, 3, kernel, kernel), "w")
        b = _leaf(rng, (4,), "b")
        return (lambda: _smooth_scalar(F.conv2d(x, w, b, stride, pad))), [x, w, b]

    return build


def _check_linear(rng):
    x = _leaf(rng, (3, 5), "x")
    w = _leaf(rng, (4, 5), "w")
    b = _leaf(rng, (4,), "b")
    return (lambda: _smooth_scalar(F.linear(x, w, b))), [x, w, b]


def _check_bn_train(rng):
    bn = BatchNorm2d(3)
    params = _prep(bn, "bn")
    x = _leaf(rng, (2, 3, 4, 4), "x")
    return (lambda: _smooth_scalar(bn(x))), [x] + params


def _check_bn_eval(rng):
    bn = BatchNorm2d(3)
    params = _prep(bn, "bn")
    bn.set_buffer("running_mean", rng.standard_normal(3))
    bn.set_buffer("running_var", rng.uniform(0.5, 2.0, 3))
    bn.eval()
    x = _leaf(rng, (2, 3, 4, 4), "x")
    return (lambda: _smooth_scalar(bn(x))), [x] + params


def _check_unary(op) -> CheckBuilder:
    def build(rng):
        x = _leaf(rng, (2, 3, 4, 4), "x")
        return (lambda: _smooth_scalar(op(x))), [x]

    return build


def _check_sigmoid(rng):
    x = _leaf(rng, (2, 3, 4, 4), "x")
    return (lambda: F.tmean(F.mul(F.sigmoid(x), x))), [x]


def _check_log(rng):
    x = Tensor(rng.uniform(0.3, 2.0, (2, 3, 4, 4)), requires_grad=True, name="x")
    return (lambda: F.tmean(F.mul(F.log(x), x))), [x]


def _check_clip(rng):
    # values strictly inside or clearly outside the clamp band
    vals = rng.choice([-2.0, 0.0, 2.0], size=(2, 3, 4, 4)) + rng.uniform(-0.3, 0.3, (2, 3, 4, 4))
    x = Tensor(vals, requires_grad=True, name="x")
    return (lambda: _smooth_scalar(F.clip(x, -1.0, 1.0))), [x]


def _check_binary(op) -> CheckBuilder:
    def build(rng):
        a = _leaf(rng, (2, 3, 4, 4), "a")
        b = _leaf(rng, (2, 3, 4, 4), "b")
        return (lambda: _smooth_scalar(op(a, b))), [a, b]

    return build


def _check_mul_broadcast(rng):
    a = _leaf(rng, (2, 3, 4, 4), "a")
    g = _leaf(rng, (2, 3, 1, 1), "gate")
    return (lambda: _smooth_scalar(F.mul(g, a))), [a, g]


def _check_concat(rng):
    a = _leaf(rng, (2, 2, 4, 4), "a")
    b = _leaf(rng, (2, 3, 4, 4), "b")
    return (lambda: _smooth_scalar(F.concat([a, b], axis=1))), [a, b]


def _check_maxpool(rng):
    x = Tensor(rng.standard_normal((2, 3, 4, 4)), requires_grad=True, name="x")
    return (lambda: _smooth_scalar(F.maxpool2d(x, 2))), [x]


def _check_upsample(rng):
    x = _leaf(rng, (2, 3, 3, 3), "x")
    return (lambda: _smooth_scalar(F.upsample_nearest(x, 2))), [x]


def _check_pool_global(op) -> CheckBuilder:
    def build(rng):
        x = Tensor(rng.standard_normal((2, 4, 3, 3)), requires_grad=True, name="x")
        return (lambda: _smooth_scalar(op(x))), [x]

    return build


def _check_etma(rng):
    etma = Etma(EtmaConfig(channels=4, pool_kernels=(2, 4, 8)), rng)
    params = _prep(etma, "etma")
    e = [_leaf(rng, (1, 2, 8, 8), f"e{i + 1}", low=0.0, high=1.0) for i in range(3)]
    return (lambda: _smooth_scalar(etma(e[0], e[1], e[2]))), e + params


def _check_channel_attention(rng):
    ca = ChannelAttention(4, rng)
    params = _prep(ca, "ca")
    x = Tensor(rng.standard_normal((2, 4, 3, 3)), requires_grad=True, name="x")
    return (lambda: F.tmean(ca(x))), [x] + params


def _check_spatial_attention(rng):
    sa = SpatialAttention(rng)
    params = _prep(sa, "sa")
    x = Tensor(rng.standard_normal((2, 4, 4, 4)), requires_grad=True, name="x")
    return (lambda: F.tmean(sa(x))), [x] + params


def _bdc_piece(stage_fn) -> CheckBuilder:
    def build(rng):
        stage = BdcStage(3, rng, prev_channels=3)
        params = _prep(stage, "bdc")
        f_r = _leaf(rng, (1, 3, 4, 4), "f_rgb")
        f_e = _leaf(rng, (1, 3, 4, 4), "f_event")
        prev = _leaf(rng, (1, 3, 8, 8), "prev")
        return (lambda: stage_fn(stage, f_r, f_e, prev)), [f_r, f_e, prev] + params

    return build


def _bdc_activate(stage, f_r, f_e, prev):
    a, b = stage.activate(f_r, f_e)
    return _smooth_scalar(F.add(a, b))


def _bdc_enhance(stage, f_r, f_e, prev):
    a, b = stage.mutual_enhance(*stage.activate(f_r, f_e))
    return _smooth_scalar(F.add(a, b))


def _bdc_channel(stage, f_r, f_e, prev):
    a, b = stage.cross_calibrate_channel(*stage.mutual_enhance(*stage.activate(f_r, f_e)))
    return _smooth_scalar(F.add(a, b))


def _bdc_spatial(stage, f_r, f_e, prev):
    fc = stage.cross_calibrate_channel(*stage.mutual_enhance(*stage.activate(f_r, f_e)))
    a, b = stage.cross_calibrate_spatial(*fc)
    return _smooth_scalar(F.add(a, b))


def _bdc_full(stage, f_r, f_e, prev):
    return _smooth_scalar(stage(f_r, f_e, prev))


def _check_residual_block(rng):
    block = BasicBlock(3, 4, 2, rng)
    params = _prep(block, "block")
    x = _leaf(rng, (1, 3, 6, 6), "x")
    return (lambda: _smooth_scalar(block(x))), [x] + params


def _check_residual_stage(rng):
    stage = ResidualStage(3, 3, 2, 1, rng)
    params = _prep(stage, "stage")
    x = _leaf(rng, (1, 3, 4, 4), "x")
    return (lambda: _smooth_scalar(stage(x))), [x] + params


def _check_head_loss(rng):
    head = DetectionHead(6, rng, n_classes=1, trunk_channels=(4, 3))
    params = _prep(head, "head")
    x = _leaf(rng, (1, 6, 2, 2), "x")
    targets = [encode_targets([(0, (6.0, 8.0, 22.0, 28.0))], 1, 8, 8)]

    def loss():
        return compute_loss(head(x), targets).total

    return loss, [x] + params


CHECKS: list[tuple[str, CheckBuilder]] = [
    ("conv2d_3x3_s1", _check_conv(1, 1, 3)),
    ("conv2d_3x3_s2", _check_conv(2, 1, 3)),
    ("conv2d_1x1", _check_conv(1, 0, 1)),
    ("linear", _check_linear),
    ("batchnorm_train", _check_bn_train),
    ("batchnorm_eval", _check_bn_eval),
    ("relu", _check_unary(F.relu)),
    ("sigmoid", _check_sigmoid),
    ("log", _check_log),
    ("clip", _check_clip),
    ("absolute", _check_unary(F.absolute)),
    ("add", _check_binary(F.add)),
    ("sub", _check_binary(F.sub)),
    ("mul", _check_binary(F.mul)),
    ("mul_broadcast_gate", _check_mul_broadcast),
    ("eltwise_max", _check_binary(F.eltwise_max)),
    ("concat", _check_concat),
    ("maxpool2d", _check_maxpool),
    ("upsample_nearest", _check_upsample),
    ("global_avg_pool", _check_pool_global(F.global_avg_pool)),
    ("global_max_pool", _check_pool_global(F.global_max_pool)),
    ("channel_mean_map", _check_pool_global(F.channel_mean_map)),
    ("channel_max_map", _check_pool_global(F.channel_max_map)),
    ("etma_block", _check_etma),
    ("channel_attention", _check_channel_attention),
    ("spatial_attention", _check_spatial_attention),
    ("bdc_activate", _bdc_piece(_bdc_activate)),
    ("bdc_mutual_enhance", _bdc_piece(_bdc_enhance)),
    ("bdc_channel_calibration", _bdc_piece(_bdc_channel)),
    ("bdc_spatial_calibration", _bdc_piece(_bdc_spatial)),
    ("bdc_full_stage", _bdc_piece(_bdc_full)),
    ("residual_block", _check_residual_block),
    ("residual_stage", _check_residual_stage),
    ("head_and_loss", _check_head_loss),
]


def _condition(loss_fn: Callable[[], Tensor]) -> Callable[[], Tensor]:
    """Rescale the check scalar to magnitude ~0.05 by an exact power of two.

    Central differences of a large loss drown near-zero analytic gradients
    in float64 round-off relative to the 1e-8 denominator floor; a
    power-of-two rescale bounds the absolute noise without introducing any
    rounding of its own.
    """
    from .nn.tensor import no_grad

    with no_grad():
        f0 = abs(float(loss_fn().data))
    if not np.isfinite(f0) or f0 == 0.0:
        return loss_fn
    c = min(1.0, 2.0 ** math.floor(math.log2(0.05 / f0)))
    return lambda: F.scale(loss_fn(), c)


def run_check(name: str, builder: CheckBuilder, seeds: int = 20) -> float:
    """Worst max-relative-error over the seeds; raises nothing, just reports."""
    worst = 0.0
    for seed in range(seeds):
        rng = np.random.default_rng(np.random.SeedSequence([zlib.crc32(name.encode()), seed]))
        loss_fn, wrt = builder(rng)
        report = grad_check(_condition(loss_fn), wrt, tol=TOL, h=STEP)
        worst = max(worst, report.worst)
    return worst


def run_gradient_suite(seeds: int = 20, verbose: bool = False) -> bool:
    ok = True
    t0 = time.perf_counter()
    for name, builder in CHECKS:
        worst = run_check(name, builder, seeds)
        passed = worst <= TOL
        ok = ok and passed
        if verbose:
            print(f"[{'ok' if passed else 'FAIL'}] {name}: worst rel err {worst:.3e} ({seeds} seeds)")
    if verbose:
        print(f"gradient suite: {'PASS' if ok else 'FAIL'} in {time.perf_counter() - t0:.1f}s")
    return ok
