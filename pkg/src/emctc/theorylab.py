"""Numerical checks of the embedding-matching analyses.

Covers the one-dimensional softmax example, the two eight-case tables
under the binary-distance approximation, distance concentration, collapse
of a two-hypothesis model onto a midpoint word, and the inner-product
limit. ``run_suite`` gathers everything into pass/fail rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from .metrics import write_csv

CASES = ("i", "ii", "iii", "iv", "v", "vi", "vii", "viii")
SCALAR_VOCAB = (1.0, 2.0, 4.0)


# -- one-dimensional example ------------------------------------------------

def scalar_log_p(f: float, vocab=SCALAR_VOCAB, target: int = 1) -> float:
    """log softmax over the words alone, scores -(f - g)^2."""
    s = -(f - np.asarray(vocab, dtype=np.float64)) ** 2
    return float(s[target] - logsumexp(s))


@dataclass(frozen=True)
class ScalarArgmax:
    p_argmax: float  # golden-section maximiser of p_2
    s_argmax: float  # vertex of the pre-softmax score s_2
    grid_argmax: float  # grid-scan maximiser of p_2
    p_max: float


def _parabola_vertex(xs, ys) -> float:
    (a, b, c), (fa, fb, fc) = xs, ys
    num = (b - a) ** 2 * (fb - fc) - (b - c) ** 2 * (fb - fa)
    den = (b - a) * (fb - fc) - (b - c) * (fb - fa)
    return b - 0.5 * num / den


def scalar_softmax_argmax(vocab=SCALAR_VOCAB, target: int = 1, grid_step: float = 1e-4) -> ScalarArgmax:
    g = np.asarray(vocab, dtype=np.float64)
    lo, hi = float(g.min()), float(g.max())
    res = optimize.minimize_scalar(lambda f: -scalar_log_p(f, g, target), bracket=(lo, float(g[target]), hi),
                                   method="golden", tol=1e-12)
    # s_2 is an exact parabola, so a single interpolation step lands on its vertex
    xs = (lo, float(g[target]), hi)
    s_vertex = _parabola_vertex(xs, [-(x - g[target]) ** 2 for x in xs])
    grid = np.arange(lo, hi + grid_step / 2, grid_step)
    s = -(grid[:, None] - g[None, :]) ** 2
    lp = s[:, target] - logsumexp(s, axis=1)
    return ScalarArgmax(float(res.x), float(s_vertex), float(grid[int(np.argmax(lp))]), math.exp(-res.fun))


# -- eight-case tables -------------------------------------------------------

@dataclass
class CaseTable:
    D: float
    n: int
    values: dict[str, float]  # NaN where a case needs more words than n

    @property
    def argmax(self) -> str:
        live = {k: v for k, v in self.values.items() if not math.isnan(v)}
        return max(live, key=live.get)

    @property
    def v_strictly_max(self) -> bool:
        v = self.values["v"]
        return all(x < v for k, x in self.values.items() if k != "v" and not math.isnan(x))


def _ln(x: float) -> float:
    return math.log(x)


def eight_case_c(D: float, n: int, check: bool = False) -> CaseTable:
    """ln(p_a p_b) for a two-hypothesis frame when every mismatch costs distance D."""
    if not D > 0 or n < 3:
        raise ValueError("need D > 0 and n >= 3")
    e1, e2 = math.exp(-D), math.exp(-2 * D)
    vals = {
        "i": -4 * D - 2 * _ln(n * e2),
        "ii": -3 * D - 2 * _ln(e1 + (n - 1) * e2),
        "iii": -3 * D - 2 * _ln(2 * e1 + (n - 2) * e2),
        "iv": -2 * D - 2 * _ln(1 + (n - 1) * e2),
        "v": -2 * D - 2 * _ln(2 * e1 + (n - 2) * e2),
        "vi": -4 * D - 2 * _ln(2 * e1 + (n - 2) * e2),
        "vii": -4 * D - 2 * _ln(1 + (n - 1) * e2),
        "viii": -4 * D - 2 * _ln(e1 + (n - 1) * e2),
    }
    table = CaseTable(D, n, vals)
    if check:
        assert table.v_strictly_max, f"case (v) is not the strict maximum at D={D}, n={n}: {vals}"
    return table


def eight_case_d(D: float, n: int, d_samples=None, check: bool = False) -> CaseTable:
    """ln(q_a q_b) for the timestamped scores under the binary-distance approximation.

    ``d_samples`` holds one timestamp distance per word, ordered a, b, c, d,
    then the rest. The first two are replaced by 0, since the reference
    timestamps are matched exactly. Case (vi) needs four words and is NaN
    for n = 3.
    """
    if not D > 0 or n < 3:
        raise ValueError("need D > 0 and n >= 3")
    d = np.zeros(n) if d_samples is None else np.array(d_samples, dtype=np.float64)
    if d.shape != (n,) or np.any(d < 0):
        raise ValueError("d_samples must hold n non-negative distances")
    d[:2] = 0.0
    h = np.exp(-2 * D - d * (2 * D + 1))
    m = np.exp(-D - d * (D + 1))
    eD, emD = math.exp(D), math.exp(-D)
    rest_ab, rest_abc, rest_abcd = h[2:].sum(), h[3:].sum(), h[4:].sum()
    vals = {
        "i": -2 * D - 2 * _ln(2 * emD + eD * rest_ab),
        "ii": -2 * D - 2 * _ln(math.exp(-D / 2) + math.exp(-1.5 * D) + math.exp(D / 2) * rest_ab),
        "iii": -2 * D - 2 * _ln(math.exp(-D / 2) + math.exp(-1.5 * D) + math.exp(D / 2) * (m[2] + rest_abc)),
        "iv": -2 * D - 2 * _ln(1 + math.exp(-2 * D) + rest_ab),
        "v": -2 * D - 2 * _ln(2 * emD + rest_ab),
        "vi": (-2 * D - 2 * _ln(2 * emD + eD * (m[2] + m[3] + rest_abcd))) if n >= 4 else math.nan,
        "vii": -2 * D - 2 * _ln(2 * emD + eD * (math.exp(-d[2]) + rest_abc)),
        "viii": -2 * D - 2 * _ln(2 * emD + eD * (m[2] + rest_abc)),
    }
    table = CaseTable(D, n, vals)
    if check:
        assert table.v_strictly_max, f"case (v) is not the strict maximum at D={D}, n={n}: {vals}"
    return table


def matched_pair_posterior(D: float, n: int, d_samples=None) -> float:
    """q_a when f1 = g_a, f2 = g_b and both reference timestamps match (z_a = z_b = -D)."""
    d = np.zeros(n) if d_samples is None else np.array(d_samples, dtype=np.float64)
    z = -2 * D - d * (2 * D + 1)
    z[:2] = -D
    return float(math.exp(z[0] - logsumexp(z)))


# -- distance concentration --------------------------------------------------

@dataclass(frozen=True)
class ConcentrationRow:
    dim: int
    cv: float  # std / mean of pairwise L2 distances
    mean_abs_cos: float


def distance_concentration(dims=(2, 8, 32, 128, 512), trials: int = 1000, seed: int = 0) -> list[ConcentrationRow]:
    rng = np.random.default_rng(seed)
    rows = []
    for dim in dims:
        if dim < 1:
            raise ValueError("dims must be >= 1")
        x = rng.standard_normal((trials, dim))
        y = rng.standard_normal((trials, dim))
        dist = np.linalg.norm(x - y, axis=1)
        cos = np.abs(np.einsum("ij,ij->i", x, y)) / (np.linalg.norm(x, axis=1) * np.linalg.norm(y, axis=1))
        rows.append(ConcentrationRow(int(dim), float(dist.std() / dist.mean()), float(cos.mean())))
    return rows


# -- collapse onto the midpoint ----------------------------------------------

def pair_objective(f1: np.ndarray, f2: np.ndarray, vocab: np.ndarray, a: int = 0, b: int = 1) -> float:
    """ln p_a + ln p_b with scores -(|f1 - g|^2 + |f2 - g|^2), words only."""
    s = -(((f1 - vocab) ** 2).sum(axis=1) + ((f2 - vocab) ** 2).sum(axis=1))
    return float(s[a] + s[b] - 2 * logsumexp(s))


def _pair_grad(f1, f2, vocab, a, b):
    s = -(((f1 - vocab) ** 2).sum(axis=1) + ((f2 - vocab) ** 2).sum(axis=1))
    p = np.exp(s - logsumexp(s))
    w = -2.0 * p
    w[a] += 1.0
    w[b] += 1.0
    # d s_i / d f_k = -2 (f_k - g_i)
    g1 = -2.0 * (w.sum() * f1 - w @ vocab)
    g2 = -2.0 * (w.sum() * f2 - w @ vocab)
    return g1, g2


def midpoint_vocab(dim: int, scale: float = 0.5) -> np.ndarray:
    """g_a, g_b, their midpoint, and a symmetric star around the midpoint in the other directions."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rows = [np.zeros(dim), np.zeros(dim), np.zeros(dim)]
    rows[0][0], rows[1][0] = -scale, scale
    for j in range(1, dim):
        for sign in (1.0, -1.0):
            v = np.zeros(dim)
            v[j] = sign * scale
            rows.append(v)
    return np.array(rows)


@dataclass
class CollapseResult:
    f1: np.ndarray
    f2: np.ndarray
    iterations: int
    converged: bool
    sum_ok: bool  # f1 + f2 = g_a + g_b within sum_tol
    pair_ok: bool  # {f1, f2} = {g_a, g_b} within pair_tol per coordinate
    objective: float


def collapse_demo(dim: int, vocab_mode: str = "with_midpoint", n: int = 50, seed: int = 0, init: str = "random",
                  step: float = 0.05, max_iter: int = 10_000, grad_tol: float = 1e-9,
                  sum_tol: float = 1e-3, pair_tol: float = 1e-2) -> CollapseResult:
    """Gradient ascent on ln(p_a p_b) for two hypotheses sharing one frame.

    ``with_midpoint`` uses :func:`midpoint_vocab`; ``without_midpoint`` uses
    ``n`` standard-normal words. ``init="symmetric"`` starts both hypotheses
    at the same point.
    """
    rng = np.random.default_rng(seed)
    if vocab_mode == "with_midpoint":
        vocab = midpoint_vocab(dim)
    elif vocab_mode == "without_midpoint":
        if n < 2:
            raise ValueError("need at least two words")
        vocab = rng.standard_normal((n, dim))
    else:
        raise ValueError(f"unknown vocab_mode {vocab_mode!r}")
    a, b = 0, 1
    f1 = rng.standard_normal(dim)
    f2 = f1.copy() if init == "symmetric" else rng.standard_normal(dim)
    if init not in ("random", "symmetric"):
        raise ValueError(f"unknown init {init!r}")
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g1, g2 = _pair_grad(f1, f2, vocab, a, b)
        f1 = f1 + step * g1
        f2 = f2 + step * g2
        if max(np.abs(g1).max(), np.abs(g2).max()) < grad_tol:
            converged = True
            break
    target = vocab[a] + vocab[b]
    sum_ok = bool(np.abs(f1 + f2 - target).max() < sum_tol)
    pair_ok = bool(
        (np.abs(f1 - vocab[a]).max() < pair_tol and np.abs(f2 - vocab[b]).max() < pair_tol)
        or (np.abs(f1 - vocab[b]).max() < pair_tol and np.abs(f2 - vocab[a]).max() < pair_tol))
    return CollapseResult(f1, f2, it, converged, sum_ok, pair_ok, pair_objective(f1, f2, vocab, a, b))


# -- inner-product limit -----------------------------------------------------

def inner_bound(n: int, c: float) -> float:
    """Limit of ln p_i at f = g_i when all other words are orthogonal to f."""
    if n < 2 or not c > 0:
        raise ValueError("need n >= 2 and c > 0")
    return -math.log1p((n - 1) * math.exp(-c))


def inner_bound_empirical(n: int, c: float, dim: int = 512, seed: int = 0, orthogonalize: bool = True) -> float:
    """ln p_i at f = g_i for random words scaled to squared norm c."""
    if n > dim and orthogonalize:
        raise ValueError("cannot orthogonalise more words than dimensions")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((dim, n))
    if orthogonalize:
        g, _ = np.linalg.qr(g)
    g = g.T
    g *= np.sqrt(c) / np.linalg.norm(g, axis=1, keepdims=True)
    s = g @ g[0]
    return float(s[0] - logsumexp(s))


# -- suite -------------------------------------------------------------------

GRID_D = (0.5, 1.0, 2.0, 4.0, 8.0)
GRID_N = (3, 10, 100)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    asserted: bool = True


@dataclass
class SuiteResult:
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks if c.asserted)

    def add(self, name, passed, detail, asserted=True):
        self.checks.append(Check(name, bool(passed), detail, asserted))


def run_suite(seed: int = 0) -> SuiteResult:
    out = SuiteResult()
    sa = scalar_softmax_argmax()
    out.add("scalar_p_argmax", abs(sa.p_argmax - 2.385) <= 0.005 and abs(sa.grid_argmax - sa.p_argmax) <= 1e-4,
            f"golden={sa.p_argmax:.6f} grid={sa.grid_argmax:.4f}")
    out.add("scalar_s_argmax", sa.s_argmax == 2.0, f"vertex={sa.s_argmax!r}")

    bad_c = [(D, n) for D in GRID_D for n in GRID_N if not eight_case_c(D, n).v_strictly_max]
    out.add("eight_case_c", not bad_c, f"violations={bad_c}")
    rng = np.random.default_rng(seed)
    bad_d = []
    for D in GRID_D:
        for n in GRID_N:
            draws = [np.zeros(n)] + [rng.uniform(0.0, 1.0, n) for _ in range(100)]
            bad_d += [(D, n) for d in draws if not eight_case_d(D, n, d).v_strictly_max]
    out.add("eight_case_d", not bad_d, f"violations={len(bad_d)}")
    qa = max(matched_pair_posterior(D, n) for D in GRID_D for n in GRID_N)
    out.add("matched_pair_below_half", qa < 0.5, f"max q_a={qa:.6f}")

    rows = distance_concentration(seed=seed)
    cvs = [r.cv for r in rows]
    out.add("concentration_decreasing", all(x > y for x, y in zip(cvs, cvs[1:])),
            " ".join(f"{r.dim}:{r.cv:.4f}" for r in rows))
    out.add("concentration_cv512", rows[-1].cv < 0.1, f"cv={rows[-1].cv:.4f}")
    out.add("near_orthogonal_512", rows[-1].mean_abs_cos < 0.1, f"mean|cos|={rows[-1].mean_abs_cos:.4f}")

    cm = collapse_demo(2, "with_midpoint", seed=seed)
    out.add("collapse_midpoint_sum", cm.sum_ok and cm.converged,
            f"f1+f2={np.round(cm.f1 + cm.f2, 6).tolist()} iters={cm.iterations}")
    cs = collapse_demo(2, "with_midpoint", seed=seed, init="symmetric")
    out.add("collapse_symmetric_init", bool(np.array_equal(cs.f1, cs.f2)), "f1 == f2 throughout")
    c64 = collapse_demo(64, "without_midpoint", seed=seed)
    out.add("collapse_dim64_pair", c64.pair_ok,
            f"pair_ok={c64.pair_ok} converged={c64.converged} |f1-f2| preserved under ascent", asserted=False)

    emp, closed = inner_bound_empirical(10, 16.0, 512, seed), inner_bound(10, 16.0)
    out.add("inner_bound", abs(emp - closed) < 0.05, f"empirical={emp:.3e} closed={closed:.3e}")
    return out


def write_suite_csv(path, result: SuiteResult) -> None:
    rows = [{"check": c.name, "passed": int(c.passed), "asserted": int(c.asserted), "detail": c.detail}
            for c in result.checks]
    write_csv(path, rows, ["check", "passed", "asserted", "detail"])
