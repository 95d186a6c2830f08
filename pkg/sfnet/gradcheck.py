"""Central finite-difference checks of the analytic gradients.

Every suite runs at verification precision. Coordinates whose ±h perturbation changes any
top-k selection are skipped: the loss is not differentiable across a selection flip.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .attention.fusion import cafb_forward, init_cafb
from .attention.sparse import DEFAULT_ALPHAS, init_stb, selection_trace, stb_forward
from .config import ModelConfig
from .errors import GradCheckError, UsageError
from .model.backbone import aux_tokens, build_model, classify_tokens, hsi_tokens, sfnet_forward
from .model.pca import pca_fit
from .nn.layers import Initializer, named_tensors
from .tensor.conv import conv2d, conv3d
from .tensor.core import Precision, Tensor, zero_grads
from .tensor.ops import concat, gelu, layer_norm, matmul, mul, reshape, row_softmax, total
from .training.loss import cross_entropy

logger = logging.getLogger("sfnet.gradcheck")

VERIFY = Precision.VERIFICATION
REL_FLOOR = 1e-5


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), REL_FLOOR)


@dataclass
class SuiteResult:
    name: str
    checked: int = 0
    skipped: int = 0
    failures: list[tuple[str, tuple[int, ...], float]] = field(default_factory=list)
    worst: float = 0.0

    @property
    def pass_rate(self) -> float:
        return 1.0 if self.checked == 0 else 1.0 - len(self.failures) / self.checked

    def passed(self, min_pass_rate: float = 0.99) -> bool:
        return self.checked > 0 and self.pass_rate >= min_pass_rate


@dataclass
class GradCheckReport:
    suites: list[SuiteResult] = field(default_factory=list)
    tolerance: float = 1e-4
    min_pass_rate: float = 0.99

    @property
    def worst(self) -> float:
        return max((s.worst for s in self.suites), default=0.0)

    @property
    def passed(self) -> bool:
        return all(s.passed(self.min_pass_rate) for s in self.suites)

    def render(self) -> str:
        lines = []
        for s in self.suites:
            status = "ok" if s.passed(self.min_pass_rate) else "FAIL"
            lines.append(
                f"{s.name:<12} checked={s.checked} skipped={s.skipped} "
                f"failed={len(s.failures)} worst_rel={s.worst:.3e} {status}"
            )
        lines.append(f"worst relative error: {self.worst:.3e} (tolerance {self.tolerance:g})")
        return "\n".join(lines)


def _evaluate(loss_fn: Callable[[], Tensor]) -> tuple[float, list[np.ndarray]]:
    with selection_trace() as masks:
        value = loss_fn().item()
    return value, masks


def _same_selection(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def numeric_grad(loss_fn: Callable[[], Tensor], t: Tensor, index: tuple[int, ...], h: float) -> tuple[float, bool]:
    """Central difference at one coordinate; the flag is False when ±h flips a top-k selection."""
    base = t.data.copy()
    _, masks0 = _evaluate(loss_fn)
    try:
        bumped = base.copy()
        bumped[index] += h
        t.assign(bumped)
        f_plus, masks_plus = _evaluate(loss_fn)
        bumped[index] = base[index] - h
        t.assign(bumped)
        f_minus, masks_minus = _evaluate(loss_fn)
    finally:
        t.assign(base)
    stable = _same_selection(masks0, masks_plus) and _same_selection(masks0, masks_minus)
    return (f_plus - f_minus) / (2.0 * h), stable


def check_gradients(
    name: str,
    loss_fn: Callable[[], Tensor],
    tensors: Sequence[tuple[str, Tensor]],
    h: float = 1e-5,
    tol: float = 1e-4,
    max_coords: int = 6,
    seed: int = 0,
) -> SuiteResult:
    """Compare backward against central differences on a sample of coordinates per tensor."""
    rng = np.random.default_rng(seed)
    result = SuiteResult(name)
    leaves = [t for _, t in tensors]
    zero_grads(leaves)
    loss_fn().backward()
    analytic = {id(t): (t.grad.copy() if t.grad is not None else np.zeros_like(t.data)) for t in leaves}
    zero_grads(leaves)

    for tname, t in tensors:
        flat = np.arange(t.size)
        picks = flat if t.size <= max_coords else rng.choice(flat, size=max_coords, replace=False)
        for p in picks:
            index = np.unravel_index(int(p), t.shape)
            numeric, stable = numeric_grad(loss_fn, t, index, h)
            if not stable:
                result.skipped += 1
                continue
            err = relative_error(float(analytic[id(t)][index]), numeric)
            result.checked += 1
            result.worst = max(result.worst, err)
            if err >= tol:
                result.failures.append((tname, tuple(int(i) for i in index), err))
    logger.debug(
        "gradcheck.suite name=%s checked=%d skipped=%d failed=%d worst=%.3e",
        name, result.checked, result.skipped, len(result.failures), result.worst,
    )
    return result


def _projected_loss(out_fn: Callable[[], Tensor], rng: np.random.Generator) -> Callable[[], Tensor]:
    """Scalarize a block output with a fixed random projection."""
    shape = out_fn().shape
    weights = Tensor(rng.standard_normal(shape), precision=VERIFY)
    return lambda: total(mul(out_fn(), weights))


def _input(rng: np.random.Generator, shape: tuple[int, ...]) -> Tensor:
    return Tensor(rng.standard_normal(shape), requires_grad=True, precision=VERIFY)


def toy_config(seed: int = 0) -> ModelConfig:
    return ModelConfig(
        patch_size=3,
        pca_components=4,
        hsi_stem_filters=2,
        aux_stem_filters=3,
        token_dim=8,
        n_classes=2,
        precision=VERIFY,
        seed=seed,
    )


def _toy_model(seed: int, rng: np.random.Generator, bands: int = 6, aux_channels: int = 2):
    config = toy_config(seed)
    pca = pca_fit(rng.standard_normal((32, bands)), config.pca_components)
    return build_model(config, pca, aux_channels)


def suite_ops(seed: int, **kw) -> SuiteResult:
    rng = np.random.default_rng(seed)
    x = _input(rng, (4, 5))
    w = _input(rng, (5, 5))
    gamma = _input(rng, (5,))
    beta = _input(rng, (5,))
    out = lambda: row_softmax(gelu(layer_norm(matmul(x, w), gamma, beta)))
    tensors = [("x", x), ("w", w), ("gamma", gamma), ("beta", beta)]
    return check_gradients("ops", _projected_loss(out, rng), tensors, seed=seed, **kw)


def suite_conv(seed: int, **kw) -> SuiteResult:
    rng = np.random.default_rng(seed)
    x2 = _input(rng, (2, 5, 5))
    k2 = _input(rng, (3, 2, 3, 3))
    x3 = _input(rng, (1, 4, 5, 5))
    k3 = _input(rng, (2, 1, 3, 3, 3))

    def out():
        a = conv2d(x2, k2, padding="same")
        b = conv3d(x3, k3, stride=2, padding="valid")
        return concat([reshape(a, (a.size,)), reshape(b, (b.size,))])

    tensors = [("x2", x2), ("k2", k2), ("x3", x3), ("k3", k3)]
    return check_gradients("conv", _projected_loss(out, rng), tensors, seed=seed, **kw)


def suite_stb(seed: int, **kw) -> SuiteResult:
    rng = np.random.default_rng(seed)
    init = Initializer(seed, VERIFY)
    block = init_stb(init, 8, DEFAULT_ALPHAS)
    x = _input(rng, (8, 8))
    tensors = [("x", x), *named_tensors(block, "stb")]
    return check_gradients("stb", _projected_loss(lambda: stb_forward(x, block), rng), tensors, seed=seed, **kw)


def suite_cafb(seed: int, literal: bool = False, **kw) -> SuiteResult:
    rng = np.random.default_rng(seed)
    init = Initializer(seed, VERIFY)
    block = init_cafb(init, 8, 2, literal)
    t_h = _input(rng, (6, 8))
    t_x = _input(rng, (6, 8))
    tensors = [("t_h", t_h), ("t_x", t_x), *named_tensors(block, "cafb")]
    name = "cafb-literal" if literal else "cafb"
    return check_gradients(name, _projected_loss(lambda: cafb_forward(t_h, t_x, block), rng), tensors, seed=seed, **kw)


def suite_stems(seed: int, **kw) -> SuiteResult:
    rng = np.random.default_rng(seed)
    model = _toy_model(seed, rng)
    p, r = model.config.patch_size, model.config.pca_components
    hsi = _input(rng, (r, p, p))
    aux = _input(rng, (model.aux_channels, p, p))
    out = lambda: concat([hsi_tokens(model, hsi), aux_tokens(model, aux)], axis=1)
    tensors = [
        ("hsi", hsi), ("aux", aux),
        *named_tensors(model.hsi_stem, "hsi_stem"), *named_tensors(model.hsi_proj, "hsi_proj"),
        *named_tensors(model.aux_stem, "aux_stem"), *named_tensors(model.aux_proj, "aux_proj"),
    ]
    return check_gradients("stems", _projected_loss(out, rng), tensors, seed=seed, **kw)


def suite_classifier(seed: int, **kw) -> SuiteResult:
    rng = np.random.default_rng(seed)
    model = _toy_model(seed, rng)
    fused = _input(rng, (model.config.n_tokens, 2 * model.config.token_dim))
    loss = lambda: cross_entropy(classify_tokens(model, fused), 1)
    tensors = [("fused", fused), *named_tensors(model.classifier, "classifier")]
    return check_gradients("classifier", loss, tensors, seed=seed, **kw)


def suite_model(seed: int, **kw) -> SuiteResult:
    rng = np.random.default_rng(seed)
    model = _toy_model(seed, rng)
    p, r = model.config.patch_size, model.config.pca_components
    hsi = Tensor(rng.standard_normal((r, p, p)), precision=VERIFY)
    aux = Tensor(rng.standard_normal((model.aux_channels, p, p)), precision=VERIFY)
    loss = lambda: cross_entropy(sfnet_forward(model, hsi, aux), 0)
    return check_gradients("model", loss, model.named_tensors(), seed=seed, **kw)


SUITES: dict[str, Callable[..., SuiteResult]] = {
    "ops": suite_ops,
    "conv": suite_conv,
    "stb": suite_stb,
    "cafb": suite_cafb,
    "cafb-literal": lambda seed, **kw: suite_cafb(seed, literal=True, **kw),
    "stems": suite_stems,
    "classifier": suite_classifier,
    "model": suite_model,
}


def run_gradcheck(
    seed: int = 0,
    tol: float = 1e-4,
    h: float = 1e-5,
    max_coords: int = 6,
    suites: Sequence[str] | None = None,
    strict: bool = False,
) -> GradCheckReport:
    """Run the named suites (all by default); ``strict`` raises GradCheckError on any failing suite."""
    report = GradCheckReport(tolerance=tol)
    for name in suites or SUITES:
        if name not in SUITES:
            raise UsageError(f"unknown gradcheck suite '{name}'")
        report.suites.append(SUITES[name](seed, h=h, tol=tol, max_coords=max_coords))
    logger.info("gradcheck.done suites=%d worst=%.3e passed=%s", len(report.suites), report.worst, report.passed)
    if strict and not report.passed:
        failing = [s.name for s in report.suites if not s.passed(report.min_pass_rate)]
        raise GradCheckError(f"gradient check failed in {', '.join(failing)}; worst relative error {report.worst:.3e}")
    return report
