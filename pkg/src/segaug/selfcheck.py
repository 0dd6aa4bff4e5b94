"""Built-in verification: finite-difference gradient checks and reference oracles.

Everything runs in float64. ``run_selfcheck`` returns a list of suite
results; the CLI turns any failure into exit status 1.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .autodiff import AdamState, Tensor, adam_step, default_dtype, ops
from .autodiff.gradcheck import check_gradients
from .losses import dice_per_class, feature_matching, hinge_loss_d, hinge_loss_g, jaccard_ce_loss
from .masks import one_hot
from .nn import ClassEmbedding, Conv2d, SpadeNorm, SpadeResBlock, SpectralState, power_iterate, sigma_estimate
from .stats import exact_p, average_ranks

GRAD_TOL = 1e-5
GRAD_SEEDS = (0, 1, 2, 3, 4)


def _leaf(rng, shape, away_from_zero: bool = False) -> Tensor:
    x = rng.standard_normal(shape)
    if away_from_zero:
        x = np.sign(x) * (0.1 + np.abs(x))
    return Tensor(x, requires_grad=True, dtype=np.float64)


def _project(out: Tensor, rng) -> Callable[[], Tensor]:
    """Fixed random projection turning a tensor into a scalar."""
    return Tensor(rng.standard_normal(out.shape), dtype=np.float64)


def _scalar(fn, rng):
    """Wrap ``fn`` (no args -> Tensor) into a scalar loss with a fixed projection."""
    w = _project(fn(), rng)
    return lambda: ops.sum(ops.mul(fn(), w))


def _mask(rng, n=2, size=6, labels=2):
    return one_hot(rng.integers(0, labels + 1, size=(n, size, size)), labels, dtype=np.float64)


def _module_case(module, fn, extra_inputs=()):
    return fn, list(extra_inputs) + module.parameters()


# Each case builds (scalar function, inputs) from an rng.
def _primitive_cases() -> dict[str, Callable]:
    c = {}
    c["add"] = lambda r: (lambda a, b: (_scalar(lambda: ops.add(a, b), r), [a, b]))(_leaf(r, (3, 4)), _leaf(r, (1, 4)))
    c["sub"] = lambda r: (lambda a, b: (_scalar(lambda: ops.sub(a, b), r), [a, b]))(_leaf(r, (3, 4)), _leaf(r, (3, 1)))
    c["mul"] = lambda r: (lambda a, b: (_scalar(lambda: ops.mul(a, b), r), [a, b]))(_leaf(r, (2, 3, 4)), _leaf(r, (3, 4)))
    c["scale"] = lambda r: (lambda a: (_scalar(lambda: ops.scale(a, -1.7), r), [a]))(_leaf(r, (5,)))
    c["matmul"] = lambda r: (lambda a, b: (_scalar(lambda: ops.matmul(a, b), r), [a, b]))(_leaf(r, (3, 5)), _leaf(r, (5, 2)))
    c["reshape"] = lambda r: (lambda a: (_scalar(lambda: ops.reshape(a, (6, 2)), r), [a]))(_leaf(r, (3, 4)))
    c["transpose"] = lambda r: (lambda a: (_scalar(lambda: ops.transpose(a, (2, 0, 1)), r), [a]))(_leaf(r, (2, 3, 4)))
    c["concat"] = lambda r: (lambda a, b: (_scalar(lambda: ops.concat([a, b], axis=1), r), [a, b]))(
        _leaf(r, (2, 3, 2)), _leaf(r, (2, 1, 2))
    )
    c["narrow"] = lambda r: (lambda a: (_scalar(lambda: ops.narrow(a, 1, 1, 3), r), [a]))(_leaf(r, (2, 4, 3)))
    c["relu"] = lambda r: (lambda a: (_scalar(lambda: ops.relu(a), r), [a]))(_leaf(r, (4, 5), True))
    c["leaky_relu"] = lambda r: (lambda a: (_scalar(lambda: ops.leaky_relu(a, 0.2), r), [a]))(_leaf(r, (4, 5), True))
    c["tanh"] = lambda r: (lambda a: (_scalar(lambda: ops.tanh(a), r), [a]))(_leaf(r, (4, 5)))
    c["sigmoid"] = lambda r: (lambda a: (_scalar(lambda: ops.sigmoid(a), r), [a]))(_leaf(r, (4, 5)))
    c["softmax"] = lambda r: (lambda a: (_scalar(lambda: ops.softmax(a, axis=1), r), [a]))(_leaf(r, (2, 3, 4)))
    c["log"] = lambda r: (lambda a: (_scalar(lambda: ops.log(a), r), [a]))(
        Tensor(r.uniform(0.5, 2.0, (3, 4)), requires_grad=True, dtype=np.float64)
    )
    c["exp"] = lambda r: (lambda a: (_scalar(lambda: ops.exp(a), r), [a]))(_leaf(r, (3, 4)))
    c["sum"] = lambda r: (lambda a: (_scalar(lambda: ops.sum(a, axis=(0, 2), keepdims=True), r), [a]))(_leaf(r, (2, 3, 4)))
    c["mean"] = lambda r: (lambda a: (_scalar(lambda: ops.mean(a, axis=1), r), [a]))(_leaf(r, (2, 3, 4)))
    c["conv2d"] = lambda r: (lambda x, w, b: (_scalar(lambda: ops.conv2d(x, w, b, stride=1, padding=1), r), [x, w, b]))(
        _leaf(r, (2, 3, 6, 6)), _leaf(r, (4, 3, 3, 3)), _leaf(r, (4,))
    )
    c["conv2d_strided"] = lambda r: (lambda x, w: (_scalar(lambda: ops.conv2d(x, w, None, stride=2, padding=1), r), [x, w]))(
        _leaf(r, (2, 2, 8, 8)), _leaf(r, (3, 2, 4, 4))
    )
    c["avg_pool2d"] = lambda r: (lambda x: (_scalar(lambda: ops.avg_pool2d(x, 2, 2), r), [x]))(_leaf(r, (2, 3, 6, 6)))
    c["upsample_nearest2x"] = lambda r: (lambda x: (_scalar(lambda: ops.upsample_nearest2x(x), r), [x]))(
        _leaf(r, (2, 3, 3, 3))
    )
    c["embedding"] = lambda r: (lambda t: (_scalar(lambda: ops.embedding(t, np.array([2, 0, 2])), r), [t]))(
        _leaf(r, (4, 5))
    )
    return c


def _layer_cases() -> dict[str, Callable]:
    c = {}

    def conv(r):
        layer = Conv2d(3, 4, 3, r).astype(np.float64)
        x = _leaf(r, (2, 3, 5, 5))
        return _scalar(lambda: layer(x), r), [x] + layer.parameters()

    def sn_conv(r):
        layer = Conv2d(3, 4, 3, r, spectral=True).astype(np.float64)
        x = _leaf(r, (2, 3, 5, 5))
        return _scalar(lambda: layer(x), r), [x] + layer.parameters()

    def spade(r):
        layer = SpadeNorm(3, 3, 4, r).astype(np.float64)
        x = _leaf(r, (2, 3, 6, 6))
        m = _mask(r)
        return _scalar(lambda: layer(x, m), r), [x] + layer.parameters()

    def embed(r):
        layer = ClassEmbedding(3, 4, 2, 2, r).astype(np.float64)
        return _scalar(lambda: layer([1, 2, 1]), r), layer.parameters()

    def resblock(r):
        layer = SpadeResBlock(4, 3, 3, 4, r).astype(np.float64)
        x = _leaf(r, (2, 4, 6, 6))
        m = _mask(r)
        return _scalar(lambda: layer(x, m), r), [x] + layer.parameters()

    c["conv_layer"] = conv
    c["spectral_conv"] = sn_conv
    c["spade_normalize"] = spade
    c["embed_class"] = embed
    c["spade_resblock"] = resblock
    return c


def _loss_cases() -> dict[str, Callable]:
    c = {}

    def hinge_d(r):
        a, b = _leaf(r, (2, 1, 3, 3)), _leaf(r, (2, 1, 3, 3))
        return (lambda: hinge_loss_d([a], [b])), [a, b]

    def hinge_g(r):
        a, b = _leaf(r, (2, 1, 3, 3)), _leaf(r, (2, 1, 2, 2))
        return (lambda: hinge_loss_g([a, b])), [a, b]

    def fm(r):
        real = [[Tensor(r.standard_normal((2, 3, 4, 4))), Tensor(r.standard_normal((2, 2, 2, 2)))]]
        fake = [[_leaf(r, (2, 3, 4, 4)), _leaf(r, (2, 2, 2, 2))]]
        # keep |fake - real| away from the kink of the absolute value
        for f, rl in zip(fake[0], real[0]):
            d = f.data - rl.data
            f.data[...] = rl.data + np.sign(d) * (0.1 + np.abs(d))
        return (lambda: feature_matching(real, fake)), fake[0]

    def jaccard(r):
        logits = _leaf(r, (2, 3, 5, 5))
        target = _mask(r, size=5)
        return (lambda: jaccard_ce_loss(logits, target, 1.0)), [logits]

    c["hinge_loss_d"] = hinge_d
    c["hinge_loss_g"] = hinge_g
    c["feature_matching"] = fm
    c["jaccard_ce_loss"] = jaccard
    return c


def gradient_cases() -> dict[str, Callable]:
    cases = {}
    cases.update(_primitive_cases())
    cases.update(_layer_cases())
    cases.update(_loss_cases())
    return cases


def gradient_error(name: str, seed: int) -> float:
    with default_dtype(np.float64):
        rng = np.random.default_rng(seed)
        f, inputs = gradient_cases()[name](rng)
        return check_gradients(f, inputs, h=1e-5, max_probes=64, rng=rng)


# -- oracles -----------------------------------------------------------------


def conv2d_loop(x: np.ndarray, w: np.ndarray, b, stride: int, padding: int) -> np.ndarray:
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, o, ho, wo))
    for i, j, k, l in itertools.product(range(n), range(o), range(ho), range(wo)):
        patch = xp[i, :, k * stride : k * stride + kh, l * stride : l * stride + kw]
        out[i, j, k, l] = float(np.sum(patch * w[j])) + (0.0 if b is None else b[j])
    return out


def dice_count_oracle(pred: np.ndarray, target: np.ndarray, c: int) -> float:
    inter = both = 0
    for p, t in zip(pred.ravel().tolist(), target.ravel().tolist()):
        inter += p == c and t == c
        both += (p == c) + (t == c)
    return 1.0 if both == 0 else 2.0 * inter / both


def wilcoxon_bruteforce_p(d: np.ndarray) -> float:
    d = d[d != 0]
    n = len(d)
    if n == 0:
        return 1.0
    r = average_ranks(np.abs(d))
    w_obs = min(r[d > 0].sum(), r[d < 0].sum())
    hits = 0
    for signs in itertools.product((0, 1), repeat=n):
        s = np.array(signs, dtype=bool)
        if min(r[s].sum(), r[~s].sum()) <= w_obs + 1e-9:
            hits += 1
    return min(1.0, hits / 2**n)


def adam_scalar_oracle(x0, grads, lr, b1, b2, eps):
    x, m, v = float(x0), 0.0, 0.0
    trace = []
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1**t)
        vh = v / (1 - b2**t)
        x = x - lr * mh / (np.sqrt(vh) + eps)
        trace.append(x)
    return trace


def _oracle_conv():
    worst = 0.0
    rng = np.random.default_rng(0)
    for stride, pad, k in ((1, 1, 3), (2, 1, 4), (1, 0, 1), (2, 0, 3)):
        x = rng.standard_normal((2, 3, 7, 7))
        w = rng.standard_normal((4, 3, k, k))
        b = rng.standard_normal(4)
        got = ops.conv2d(Tensor(x, dtype=np.float64), Tensor(w, dtype=np.float64), Tensor(b, dtype=np.float64), stride, pad)
        worst = max(worst, float(np.abs(got.data - conv2d_loop(x, w, b, stride, pad)).max()))
    return worst <= 1e-6, f"max abs diff {worst:.2e}"


def _oracle_dice():
    rng = np.random.default_rng(1)
    for _ in range(50):
        p = rng.integers(0, 3, (9, 9))
        t = rng.integers(0, 3, (9, 9))
        for c in range(3):
            if dice_per_class(p, t, c) != dice_count_oracle(p, t, c):
                return False, f"class {c} mismatch"
    z = np.zeros((4, 4), dtype=int)
    return dice_per_class(z, z, 1) == 1.0, "exact on 150 cases"


def _oracle_wilcoxon():
    rng = np.random.default_rng(2)
    worst = 0.0
    for n in range(1, 11):
        for _ in range(10):
            a = np.round(rng.standard_normal(n), 1)
            b = np.round(rng.standard_normal(n), 1)
            d = a - b
            dz = d[d != 0]
            if len(dz) == 0:
                continue
            r = average_ranks(np.abs(dz))
            w = min(r[dz > 0].sum(), r[dz < 0].sum())
            worst = max(worst, abs(exact_p(r, w) - wilcoxon_bruteforce_p(d)))
    return worst <= 1e-12, f"max |dp| {worst:.1e}"


def _oracle_adam():
    rng = np.random.default_rng(3)
    grads = rng.standard_normal(10)
    lr, b1, b2, eps = 1e-4, 0.0, 0.9, 1e-8
    p = np.array([0.5])
    st = AdamState(lr=lr, beta1=b1, beta2=b2, eps=eps)
    got = []
    for g in grads:
        adam_step([p], [np.array([g])], st)
        got.append(float(p[0]))
    ref = adam_scalar_oracle(0.5, grads, lr, b1, b2, eps)
    err = float(np.max(np.abs(np.array(got) - ref)))
    return err <= 1e-12, f"max |dx| {err:.1e}"


def _oracle_spectral():
    rng = np.random.default_rng(4)
    w2 = rng.standard_normal((8, 27))
    st = SpectralState.init(8, rng)
    power_iterate(w2, st, n=1000)
    est = sigma_estimate(w2, st)
    ref = float(np.sqrt(np.linalg.eigvalsh(w2 @ w2.T).max()))
    rel = abs(est - ref) / ref
    return rel <= 0.01, f"relative error {rel:.1e}"


ORACLES = {
    "conv2d": _oracle_conv,
    "dice": _oracle_dice,
    "wilcoxon": _oracle_wilcoxon,
    "adam": _oracle_adam,
    "spectral_norm": _oracle_spectral,
}


@dataclass
class SuiteResult:
    name: str
    passed: bool
    seconds: float
    failures: list = field(default_factory=list)
    detail: str = ""


def run_gradient_suite(seeds=GRAD_SEEDS, tol: float = GRAD_TOL) -> SuiteResult:
    t0 = time.perf_counter()
    failures, worst = [], 0.0
    for name in gradient_cases():
        errs = []
        for s in seeds:
            try:
                errs.append(gradient_error(name, s))
            except Exception as exc:  # a crash is a failure of that op
                failures.append(f"{name} (seed {s}: {type(exc).__name__}: {exc})")
                break
        if errs and max(errs) > tol:
            failures.append(f"{name} (rel err {max(errs):.2e})")
        worst = max([worst] + errs)
    return SuiteResult("gradients", not failures, time.perf_counter() - t0, failures, f"worst rel err {worst:.1e}")


def run_oracle_suite(name: str) -> SuiteResult:
    t0 = time.perf_counter()
    with default_dtype(np.float64):
        try:
            ok, detail = ORACLES[name]()
        except Exception as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
    return SuiteResult(f"oracle:{name}", ok, time.perf_counter() - t0, [] if ok else [name], detail)


def run_selfcheck() -> list[SuiteResult]:
    return [run_gradient_suite()] + [run_oracle_suite(n) for n in ORACLES]
