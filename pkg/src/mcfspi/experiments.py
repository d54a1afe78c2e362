"""Monte Carlo harness: phase-transition diagrams, empirical restricted
isometry concentration, raster-scan vs sketched-measurement comparison, and
the desk-scale benchmark reconstruction pair."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .geometry import (
    ImageGrid,
    fermat_spiral_layout,
    grid_for_unit_pitch,
    integer_grid_layout,
)
from .operators import SensingVariant, make_sensing_op
from .physics import (
    NoiseKind,
    NoiseModel,
    full_raster_points,
    raster_reconstruct,
    raster_scan,
)
from .recon import BpdnProblem, solve_bpdn_l1

# desk-scale physical defaults (meters); z is comfortably in the far field
DEFAULT_WAVELENGTH = 1.064e-6
DEFAULT_FIBER_DIAMETER = 3e-4
DEFAULT_DISTANCE = 10.0


@dataclass
class TrialConfig:
    n: int
    Q: int
    M: int
    K: int
    layout_kind: str = "fermat"
    noise: str = "none"
    photon_scale: float = 1e4
    epsilon_rule: str = "zero"        # "zero" | "pilot"
    seed: int = 0
    success_threshold: float = 1e-3
    max_iters: int = 2000
    margin: float = 2.0

    def __post_init__(self):
        for name in ("n", "Q", "M", "K"):
            if getattr(self, name) < 0 or (name != "K" and getattr(self, name) < 1):
                raise ValueError(f"{name} must be positive")
        if not 0 < self.success_threshold < 1:
            raise ValueError("success_threshold must be in (0, 1)")


@dataclass
class RipReport:
    k: int
    M: int
    samples: int
    ratios: list = field(repr=False, default_factory=list)
    m_k: float = 0.0       # 2.5% quantile of ||B f||_1 / (M ||f||_2)
    M_k: float = 0.0       # 97.5% quantile

    @property
    def spread(self):
        return (self.M_k - self.m_k) / (self.M_k + self.m_k)


def random_sparse_image(n, K, rng, signed=False):
    """K-sparse image: uniform support, amplitudes uniform in [0.5, 1.5]."""
    f = np.zeros(n * n)
    if K > 0:
        support = rng.choice(n * n, size=K, replace=False)
        amps = rng.uniform(0.5, 1.5, size=K)
        if signed:
            amps *= rng.choice([-1.0, 1.0], size=K)
        f[support] = amps
    return f.reshape(n, n)


def build_layout(kind, Q, wavelength=DEFAULT_WAVELENGTH,
                 D=DEFAULT_FIBER_DIAMETER, z=DEFAULT_DISTANCE):
    kind = str(kind)
    if kind == "fermat":
        return fermat_spiral_layout(Q, D, wavelength, z)
    if kind == "grid":
        side = int(round(math.sqrt(Q)))
        if side * side != Q:
            raise ValueError("integer-grid layouts need a square core count")
        return integer_grid_layout(side, D / max(side, 1), wavelength, z)
    raise ValueError(f"unknown layout kind: {kind}")


def grid_for_layout(layout, n, margin=2.0):
    """Reconstruction grid: outermost core frequency at n/(2*margin) bins."""
    r_max = np.linalg.norm(layout.positions, axis=1).max()
    if r_max == 0:
        return ImageGrid(n=n, fov=1.0)
    fov = (n / (2.0 * margin)) * layout.wavelength * layout.propagation_distance / r_max
    return ImageGrid(n=n, fov=fov)


def trial_seed(master_seed, *cell):
    """Derived per-trial seed, stable under any scheduling."""
    ss = np.random.SeedSequence([int(master_seed), *[int(c) for c in cell]])
    return int(ss.generate_state(1)[0])


def run_trial(cfg: TrialConfig):
    """One phase-diagram trial; returns (success, rel_error)."""
    rng = np.random.default_rng(cfg.seed)
    layout = build_layout(cfg.layout_kind, cfg.Q)
    grid = grid_for_layout(layout, cfg.n, cfg.margin)
    op = make_sensing_op(layout, grid, M=cfg.M, seed=cfg.seed)
    f = random_sparse_image(cfg.n, cfg.K, rng)
    if cfg.K == 0:
        return True, 0.0
    clean = op.apply(f)
    noise = _noise_model(cfg)
    y = noise.corrupt(clean, rng)
    epsilon = _epsilon_for(cfg, clean, noise, rng)
    result = solve_bpdn_l1(BpdnProblem(op, y, epsilon=epsilon,
                                       max_iters=cfg.max_iters))
    err = np.linalg.norm(result.estimate - f) / np.linalg.norm(f)
    return bool(err < cfg.success_threshold), float(err)


def _noise_model(cfg):
    kind = NoiseKind(cfg.noise)
    if kind is NoiseKind.POISSON:
        return NoiseModel(kind, photon_scale=cfg.photon_scale)
    if kind is NoiseKind.ADDITIVE_GAUSSIAN:
        return NoiseModel(kind, sigma=cfg.photon_scale)
    return NoiseModel()


def _epsilon_for(cfg, clean, noise, rng, pilots=100):
    if cfg.epsilon_rule == "zero" or noise.kind is NoiseKind.NONE:
        return 0.0
    if cfg.epsilon_rule != "pilot":
        raise ValueError(f"unknown epsilon rule: {cfg.epsilon_rule}")
    pilot_rng = np.random.default_rng(trial_seed(cfg.seed, 0xE95))
    norms = [
        np.abs(noise.corrupt(clean, pilot_rng) - clean).sum()
        for _ in range(pilots)
    ]
    return float(np.median(norms))


def run_phase_diagram(n, Q, K_list, M_list, trials, master_seed=0,
                      layout_kind="fermat", noise="none",
                      success_threshold=1e-3, max_iters=2000,
                      workers=1, progress=None, done_cells=None):
    """Success-rate table over the (M, K) plane.

    Returns one row per cell: dict with M, Q, K, trials, successes,
    median_error.  Fully reproducible from the master seed; cells already in
    ``done_cells`` (mapping (M, K) -> row) are skipped.
    """
    done_cells = dict(done_cells or {})
    cells = [(M, K) for K in K_list for M in M_list]
    jobs = []
    for M, K in cells:
        if (M, K) in done_cells:
            continue
        for t in range(trials):
            jobs.append((M, K, t, TrialConfig(
                n=n, Q=Q, M=M, K=K, layout_kind=layout_kind, noise=noise,
                epsilon_rule="pilot" if noise != "none" else "zero",
                seed=trial_seed(master_seed, M, K, t),
                success_threshold=success_threshold, max_iters=max_iters,
            )))
    if workers > 1 and jobs:
        import multiprocessing as mp
        # spawn: fork is unsafe once the numba threading layer is initialized
        ctx = mp.get_context("spawn")
        with ctx.Pool(workers) as pool:
            outcomes = pool.map(_run_trial_job, jobs)
    else:
        outcomes = [_run_trial_job(j) for j in jobs]

    by_cell = {}
    for (M, K, t, _), (success, err) in zip(jobs, outcomes):
        by_cell.setdefault((M, K), []).append((success, err))
        if progress:
            progress(M, K, t)
    rows = []
    for M, K in cells:
        if (M, K) in done_cells:
            rows.append(done_cells[(M, K)])
            continue
        res = by_cell[(M, K)]
        rows.append({
            "M": M, "Q": Q, "K": K, "trials": trials,
            "successes": sum(s for s, _ in res),
            "median_error": float(np.median([e for _, e in res])),
        })
    return rows


def _run_trial_job(job):
    return run_trial(job[3])


def write_table_csv(path, rows, columns=None):
    if not rows:
        return
    columns = columns or list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)


def read_table_csv(path):
    with open(path, newline="") as fh:
        return [dict(r) for r in csv.DictReader(fh)]


def monotone_in_m(rows, K, alpha=0.05):
    """Check success rates are non-decreasing in M within Monte Carlo noise.

    Adjacent cells are compared with a one-sided Fisher exact test; returns
    False only if a later cell is significantly worse at level alpha.
    """
    cells = sorted((r for r in rows if r["K"] == K), key=lambda r: r["M"])
    for lo, hi in zip(cells, cells[1:]):
        table = [
            [hi["successes"], hi["trials"] - hi["successes"]],
            [lo["successes"], lo["trials"] - lo["successes"]],
        ]
        # alternative "less": the higher-M cell has a lower success odds
        _, p = stats.fisher_exact(table, alternative="less")
        if p < alpha:
            return False
    return True


def transition_location(rows, K, level=0.5):
    """Smallest M where the interpolated success rate crosses the level."""
    cells = sorted((r for r in rows if r["K"] == K), key=lambda r: r["M"])
    ms = np.array([r["M"] for r in cells], dtype=np.float64)
    ps = np.array([r["successes"] / r["trials"] for r in cells])
    if ps[0] >= level:
        return float(ms[0])
    for i in range(1, len(ms)):
        if ps[i] >= level:
            # linear interpolation between the bracketing cells
            p0, p1 = ps[i - 1], ps[i]
            if p1 == p0:
                return float(ms[i])
            return float(ms[i - 1] + (level - p0) / (p1 - p0) * (ms[i] - ms[i - 1]))
    return float("nan")


def fit_transition_scaling(rows, K_list, n):
    """Least-squares fit M*(K) = a * K * log(N) + b over the measured K."""
    N = n * n
    kept, ks, ms = [], [], []
    for K in K_list:
        mstar = transition_location(rows, K)
        if np.isfinite(mstar):
            kept.append(K)
            ks.append(K * math.log(N))
            ms.append(mstar)
    if len(ks) < 2:
        return float("nan"), float("nan"), {}
    A = np.stack([np.array(ks), np.ones(len(ks))], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.array(ms), rcond=None)
    return float(coef[0]), float(coef[1]), dict(zip(kept, ms))


# ---------------------------------------------------------------------------
# RIP-l2/l1 concentration (circulant regime)
# ---------------------------------------------------------------------------

def run_rip_study(n, k_list, M_list, samples=500, seed=0, signed=True):
    """Concentration of ||B f||_1 / (M ||f||_2) over random k-sparse images.

    Uses the circulant variant with cores on the full n x n integer lattice,
    the regime where the restricted isometry holds.
    """
    layout = integer_grid_layout(n, DEFAULT_FIBER_DIAMETER / n,
                                 DEFAULT_WAVELENGTH, DEFAULT_DISTANCE)
    grid = grid_for_unit_pitch(layout, n)
    reports = []
    for M in M_list:
        op = make_sensing_op(layout, grid, M=M, seed=seed,
                             variant=SensingVariant.CIRCULANT)
        for k in k_list:
            rng = np.random.default_rng(trial_seed(seed, M, k))
            ratios = []
            for _ in range(samples):
                f = random_sparse_image(n, k, rng, signed=signed)
                ratios.append(
                    np.abs(op.apply(f)).sum() / (M * np.linalg.norm(f))
                )
            ratios = np.array(ratios)
            reports.append(RipReport(
                k=k, M=M, samples=samples, ratios=ratios.tolist(),
                m_k=float(np.quantile(ratios, 0.025)),
                M_k=float(np.quantile(ratios, 0.975)),
            ))
    return reports


# ---------------------------------------------------------------------------
# raster scanning vs sketched sensing
# ---------------------------------------------------------------------------

def compare_rs_vs_srop(f, budgets, layout, grid, noise=None, seed=0,
                       max_iters=2000):
    """Reconstruction error of both modalities at equal measurement budgets."""
    f = np.asarray(f, dtype=np.float64)
    noise = noise or NoiseModel()
    all_points = full_raster_points(grid)
    fnorm = np.linalg.norm(f)
    rows = []
    for M in budgets:
        if M < 1:
            rows.append({"M": M, "rs_error": 1.0, "srop_error": 1.0})
            continue
        rng = np.random.default_rng(trial_seed(seed, M))
        # RS: scan the first M points of a deterministic stride ordering
        stride = max(1, len(all_points) // M)
        points = all_points[::stride][:M]
        y_rs = raster_scan(f, layout, grid, points, noise, rng)
        rs_img = raster_reconstruct(y_rs, points, layout, grid)
        rs_err = np.linalg.norm(rs_img - f) / fnorm

        op = make_sensing_op(layout, grid, M=M, seed=trial_seed(seed, M, 1))
        clean = op.apply(f)
        y = noise.corrupt(clean, rng)
        eps = 0.0 if noise.kind is NoiseKind.NONE else np.abs(y - clean).sum()
        result = solve_bpdn_l1(BpdnProblem(op, y, epsilon=eps,
                                           max_iters=max_iters))
        srop_err = np.linalg.norm(result.estimate - f) / fnorm
        rows.append({"M": M, "rs_error": float(rs_err),
                     "srop_error": float(srop_err)})
    return rows


# ---------------------------------------------------------------------------
# benchmark figure analogue
# ---------------------------------------------------------------------------

def ssim_index(a, b, window=7):
    """Mean structural similarity with uniform windows."""
    from scipy.ndimage import uniform_filter

    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    drange = max(a.max() - a.min(), b.max() - b.min(), 1e-12)
    c1, c2 = (0.01 * drange) ** 2, (0.03 * drange) ** 2
    mu_a = uniform_filter(a, window)
    mu_b = uniform_filter(b, window)
    va = uniform_filter(a * a, window) - mu_a**2
    vb = uniform_filter(b * b, window) - mu_b**2
    cov = uniform_filter(a * b, window) - mu_a * mu_b
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a**2 + mu_b**2 + c1) * (va + vb + c2)
    )
    return float(s.mean())


def run_benchmark_figure(seed=0, n=64, Q=110, M_pair=(49, 20000), K=20,
                         noise="poisson", photon_scale=1e4, max_iters=600):
    """Reconstruction pair at a small and a large sketch budget.

    Returns a dict with the phantom, both reconstructions, their relative
    errors and structural similarity scores.
    """
    rng = np.random.default_rng(seed)
    layout = build_layout("fermat", Q)
    grid = grid_for_layout(layout, n)
    f = random_sparse_image(n, K, rng)
    noise_model = (NoiseModel(NoiseKind.POISSON, photon_scale=photon_scale)
                   if noise == "poisson" else NoiseModel())
    out = {"phantom": f, "results": {}}
    for M in M_pair:
        if M < 1:
            out["results"][M] = {"error": 1.0, "ssim": 0.0, "estimate": np.zeros((n, n))}
            continue
        op = make_sensing_op(layout, grid, M=M, seed=trial_seed(seed, M))
        clean = op.apply(f)
        y = noise_model.corrupt(clean, rng)
        if noise_model.kind is NoiseKind.NONE:
            eps = 0.0
        else:
            pilot = np.random.default_rng(trial_seed(seed, M, 0xE95))
            eps = float(np.median([
                np.abs(noise_model.corrupt(clean, pilot) - clean).sum()
                for _ in range(20)
            ]))
        result = solve_bpdn_l1(BpdnProblem(op, y, epsilon=eps,
                                           max_iters=max_iters))
        err = float(np.linalg.norm(result.estimate - f) / np.linalg.norm(f))
        out["results"][M] = {
            "error": err,
            "ssim": ssim_index(f, result.estimate),
            "estimate": result.estimate,
            "status": result.status.value,
        }
    return out
