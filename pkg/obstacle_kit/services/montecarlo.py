"""
Oráculos probabilísticos independentes dos solvers de malha.

O gerador associado à forma é L u = (a u')' - b u', logo a difusão simulada tem
deriva a' - b e coeficiente de difusão √(2a), morta ao sair de (x_min, x_max).
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from numba import njit
from scipy.linalg import LinAlgError, solveh_banded

from ..exceptions import CoefficientRoughness, RegimeViolation, RegressionSingular
from ..utils.workers import max_workers
from .barriers import AnyBarrier, Barrier
from .forms import FormCoefficients, Grid
from .measures import MeasureData
from .pde import FieldLike, Reaction

logger = logging.getLogger(__name__)

DEFAULT_BLOCK_SIZE = 4096


@dataclass(frozen=True)
class PathBundle:
    """Trajetórias nos instantes t_{k0}, ..., T com saída absorvente"""
    grid: Grid
    k0: int
    x: np.ndarray
    exit_col: np.ndarray
    seed: int
    block_size: int
    bridge_correction: bool = True

    @property
    def n_paths(self) -> int:
        return self.x.shape[0]

    @property
    def n_cols(self) -> int:
        return self.x.shape[1]

    def alive(self, c: int) -> np.ndarray:
        return self.exit_col > c

    def exit_times(self) -> np.ndarray:
        """Instante de saída detetado (inf se a trajetória sobrevive até T)"""
        times = np.full(self.n_paths, np.inf)
        exited = self.exit_col < self.n_cols
        times[exited] = self.grid.times[self.k0 + self.exit_col[exited]]
        return times


@dataclass(frozen=True)
class OracleEstimate:
    value: float
    stderr: float
    n_paths: int
    method: str
    diagnostics: Dict = field(default_factory=dict)

    def band(self, extra: float = 0.0, k: float = 3.0) -> float:
        return k * self.stderr + extra

    def to_dict(self) -> Dict:
        return {'value': self.value, 'stderr': self.stderr, 'n_paths': self.n_paths,
                'method': self.method, 'diagnostics': self.diagnostics}


def _check_roughness(coeffs: FormCoefficients, grid: Grid, k0: int, eps: float,
                     max_a_slope: float) -> None:
    for t in grid.times[k0:]:
        slope = coeffs.a_slope(float(t), grid.nodes, eps)
        worst = float(np.max(np.abs(slope)))
        if not np.isfinite(worst) or worst > max_a_slope:
            raise CoefficientRoughness('estimated derivative of a exceeds the configured bound',
                                       t=float(t), slope=worst, bound=max_a_slope)


def _simulate_block(coeffs: FormCoefficients, grid: Grid, k0: int, x0: float, size: int,
                    seed: int, block: int, bridge: bool, eps: float) -> Tuple[np.ndarray, np.ndarray]:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))
    n_steps = grid.n_t - k0
    dt = grid.dt
    sqrt_dt = np.sqrt(dt)
    lo, hi = grid.x_min, grid.x_max
    X = np.empty((size, n_steps + 1))
    X[:, 0] = x0
    exit_col = np.full(size, n_steps + 1, dtype=np.int64)
    alive = np.ones(size, dtype=bool)

    for c in range(n_steps):
        t = float(grid.times[k0 + c])
        x = X[:, c]
        a_vals, b_vals = coeffs.sample(t, x)
        drift = coeffs.a_slope(t, x, eps) - b_vals
        sigma = np.sqrt(2.0 * a_vals)
        z = rng.standard_normal(size)
        uniform = rng.random(size)
        xn = x + drift * dt + sigma * sqrt_dt * z
        crossed = (xn <= lo) | (xn >= hi)
        if bridge:
            inside = ~crossed
            var = sigma ** 2 * dt
            with np.errstate(over='ignore', invalid='ignore'):
                p_lo = np.where(inside, np.exp(-2.0 * (x - lo) * (xn - lo) / var), 0.0)
                p_hi = np.where(inside, np.exp(-2.0 * (hi - x) * (hi - xn) / var), 0.0)
            p_cross = 1.0 - (1.0 - p_lo) * (1.0 - p_hi)
            crossed |= inside & (uniform < p_cross)
        newly = alive & crossed
        exit_col[newly] = c + 1
        alive &= ~crossed
        nearest = np.where(xn - lo < hi - xn, lo, hi)
        X[:, c + 1] = np.where(alive, xn, np.where(newly, nearest, X[:, c]))

    return X, exit_col


def simulate_paths(coeffs: FormCoefficients, grid: Grid, z0: Tuple[float, float], n_paths: int,
                   seed: int, bridge_correction: bool = True, block_size: int = DEFAULT_BLOCK_SIZE,
                   max_a_slope: float = 1e3, workers: Optional[int] = None) -> PathBundle:
    """Euler-Maruyama com sub-fluxos Philox por bloco (independente do número de threads)"""
    t0, x0 = z0
    k0 = grid.index_of(t0)
    eps = 0.5 * grid.dx
    _check_roughness(coeffs, grid, k0, eps, max_a_slope)
    sizes = [min(block_size, n_paths - start) for start in range(0, n_paths, block_size)]

    def run(block: int):
        return _simulate_block(coeffs, grid, k0, float(x0), sizes[block], seed, block,
                               bridge_correction, eps)

    n_workers = min(max_workers(workers), len(sizes))
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as executor:
            blocks = list(executor.map(run, range(len(sizes))))
    else:
        blocks = [run(b) for b in range(len(sizes))]

    X = np.concatenate([b[0] for b in blocks], axis=0)
    exit_col = np.concatenate([b[1] for b in blocks])
    logger.info(f"Trajetórias simuladas: {n_paths} (blocos={len(sizes)}, "
                f"saídas={int(np.sum(exit_col < X.shape[1]))})")
    return PathBundle(grid, k0, X, exit_col, seed, block_size, bridge_correction)


def field_at(values: FieldLike, grid: Grid, x: np.ndarray) -> np.ndarray:
    """Avaliar um dado terminal em pontos arbitrários (zero na fronteira)"""
    if callable(values):
        return np.broadcast_to(np.asarray(values(x), dtype=float), np.shape(x)).copy()
    nodal = np.broadcast_to(np.asarray(values, dtype=float), grid.nodes.shape)
    return np.interp(x, grid.all_nodes, np.pad(nodal, 1))


def _require_path_regime(mu: MeasureData) -> None:
    if mu.has_spatial_atoms:
        raise RegimeViolation('path oracles accept only absolutely continuous parts and time atoms')


def _atom_columns(mu: MeasureData, grid: Grid, k0: int) -> Dict[int, List]:
    columns: Dict[int, List] = {}
    for atom in mu.time_atoms:
        k, _ = grid.snap(atom.t0, lowest=1)
        if k > k0:
            columns.setdefault(k - k0, []).append(atom)
    return columns


def tail_quantiles(payoff: np.ndarray) -> Dict[str, float]:
    """Quantis das caudas do lucro por trajetória (apenas diagnóstico de integrabilidade)"""
    q01, q99 = np.quantile(payoff, [0.01, 0.99])
    return {'payoff_q01': float(q01), 'payoff_q99': float(q99),
            'payoff_max_abs': float(np.max(np.abs(payoff)))}


def _running(reaction: Reaction, mu: MeasureData, t: float, dt: float, x: np.ndarray) -> np.ndarray:
    return dt * (reaction.value(t, x, np.zeros_like(x)) + mu.density_at(t + 0.5 * dt, x))


def forward_estimate(paths: PathBundle, phi: FieldLike, reaction: Reaction,
                     mu: MeasureData) -> OracleEstimate:
    """Feynman-Kac direto sem barreiras (f independente de y)"""
    if reaction.depends_on_y:
        raise RegimeViolation('forward Monte Carlo needs a reaction independent of y')
    _require_path_regime(mu)
    grid = paths.grid
    atoms = _atom_columns(mu, grid, paths.k0)
    payoff = np.zeros(paths.n_paths)
    last = paths.n_cols - 1
    for c in range(last):
        alive = paths.alive(c)
        t = float(grid.times[paths.k0 + c])
        payoff[alive] += _running(reaction, mu, t, grid.dt, paths.x[alive, c])
        for atom in atoms.get(c + 1, []):
            nxt = paths.alive(c + 1)
            payoff[nxt] += atom.evaluate(paths.x[nxt, c + 1])
    alive = paths.alive(last)
    payoff[alive] += field_at(phi, grid, paths.x[alive, last])
    return OracleEstimate(float(payoff.mean()), float(payoff.std(ddof=1) / np.sqrt(paths.n_paths)),
                          paths.n_paths, 'forward-MC', tail_quantiles(payoff))


@njit(cache=True)
def _trinomial_step(v_next, p_up, p_mid, p_down, source, lower, upper):
    m = v_next.shape[0]
    out = np.zeros(m)
    for j in range(1, m - 1):
        value = p_up * v_next[j + 1] + p_mid * v_next[j] + p_down * v_next[j - 1] + source[j]
        if value < lower[j]:
            value = lower[j]
        if value > upper[j]:
            value = upper[j]
        out[j] = value
    return out


def snell_oracle(coeffs: FormCoefficients, grid: Grid, phi: FieldLike, reaction: Reaction,
                 mu: MeasureData, barrier: Optional[AnyBarrier], z0: Tuple[float, float],
                 depth: int = 2000, upper: Optional[AnyBarrier] = None) -> OracleEstimate:
    """Envelope de Snell numa árvore trinomial alinhada com [x_min, x_max]"""
    if not coeffs.is_constant(grid):
        raise RegimeViolation('tree oracle needs space-time constant coefficients')
    if reaction.depends_on_y:
        raise RegimeViolation('tree oracle needs a reaction independent of y')
    _require_path_regime(mu)
    lower = barrier if barrier is not None else Barrier.none('lower')
    upper = upper if upper is not None else Barrier.none('upper')

    a, b = coeffs.constant_pair(grid)
    t0, x0 = z0
    sigma2 = 2.0 * a
    drift = -b
    length = grid.x_max - grid.x_min
    dtau = (grid.T - t0) / depth
    # rede mais fina com q ≤ 1: o primeiro nó interior fica próximo de x_min + Δx
    m = max(int(length / np.sqrt(sigma2 * dtau)), 2)
    m -= m % 2
    delta = length / m
    q = sigma2 * dtau / delta ** 2
    while q > 1.0 and m > 2:
        m -= 2
        delta = length / m
        q = sigma2 * dtau / delta ** 2
    p_up = 0.5 * q + 0.5 * drift * dtau / delta
    p_down = 0.5 * q - 0.5 * drift * dtau / delta
    p_mid = 1.0 - q
    if min(p_up, p_down, p_mid) < 0.0:
        raise RegimeViolation('trinomial probabilities are negative; increase depth',
                              p_up=p_up, p_mid=p_mid, p_down=p_down)

    xs = grid.x_min + delta * np.arange(m + 1)
    xs[-1] = grid.x_max
    inner = xs[1:-1]
    taus = t0 + dtau * np.arange(depth + 1)
    taus[-1] = grid.T
    atoms: Dict[int, List] = {}
    for atom in mu.time_atoms:
        n = int(np.floor((atom.t0 - t0) / dtau + 0.5))
        if 1 <= n <= depth:
            atoms.setdefault(n, []).append(atom)

    def bounds(t: float, left: bool) -> Tuple[np.ndarray, np.ndarray]:
        lo = np.full(m + 1, -np.inf)
        up = np.full(m + 1, np.inf)
        lo[1:-1] = lower.evaluate(t, inner, left=left)
        up[1:-1] = upper.evaluate(t, inner, left=left)
        return lo, up

    V = np.zeros(m + 1)
    V[1:-1] = field_at(phi, grid, inner)
    zeros = np.zeros(m - 1)
    for n in range(depth - 1, -1, -1):
        t_next = float(taus[n + 1])
        if n + 1 in atoms:
            for atom in atoms[n + 1]:
                V[1:-1] += atom.evaluate(inner)
        lo_left, up_left = bounds(t_next, left=True)
        V[1:-1] = np.minimum(np.maximum(V[1:-1], lo_left[1:-1]), up_left[1:-1])

        t = float(taus[n])
        source = np.zeros(m + 1)
        source[1:-1] = dtau * (reaction.value(t, inner, zeros) + mu.density_at(t + 0.5 * dtau, inner))
        lo, up = bounds(t, left=False)
        V = _trinomial_step(V, p_up, p_mid, p_down, source, lo, up)

    value = float(np.interp(x0, xs, V))
    logger.info(f"Árvore trinomial: profundidade={depth}, nós={m + 1}, valor={value:.8g}")
    return OracleEstimate(value, 0.0, 0, 'tree', {'depth': depth, 'lattice_nodes': m + 1, 'q': q})


def _hat_regression(x: np.ndarray, target: np.ndarray, grid: Grid,
                    ridge: float = 1e-10) -> np.ndarray:
    """Mínimos quadrados na base de funções chapéu dos nós da malha"""
    if x.size == 0:
        return x.copy()
    if np.ptp(x) <= 1e-15:
        return np.full(x.shape, target.mean())
    n_nodes = grid.n_x + 2
    s = (x - grid.x_min) / grid.dx
    j = np.clip(np.floor(s).astype(np.int64), 0, n_nodes - 2)
    theta = np.clip(s - j, 0.0, 1.0)
    w0, w1 = 1.0 - theta, theta
    diag = np.bincount(j, w0 * w0, n_nodes) + np.bincount(j + 1, w1 * w1, n_nodes)
    off = np.bincount(j, w0 * w1, n_nodes - 1)
    rhs = np.bincount(j, w0 * target, n_nodes) + np.bincount(j + 1, w1 * target, n_nodes)

    used = np.nonzero(diag > 1e-14 * diag.max())[0]
    ab = np.zeros((2, used.size))
    ab[1] = diag[used] + ridge * diag.max()
    adjacent = used[1:] == used[:-1] + 1
    ab[0, 1:] = np.where(adjacent, off[used[:-1]], 0.0)
    try:
        coef_used = solveh_banded(ab, rhs[used])
    except LinAlgError as exc:
        raise RegressionSingular('regression normal equations are singular') from exc
    if not np.all(np.isfinite(coef_used)):
        raise RegressionSingular('regression produced non-finite coefficients')
    coef = np.zeros(n_nodes)
    coef[used] = coef_used
    return coef[j] * w0 + coef[j + 1] * w1


def _exit_values(paths: PathBundle, lower: AnyBarrier, upper: AnyBarrier,
                 pushed: np.ndarray) -> np.ndarray:
    """Valor no instante de saída: limite à esquerda clamp(0, h₁, h₂) no ponto de fronteira"""
    grid = paths.grid
    values = np.zeros(paths.n_paths)
    for col in np.unique(paths.exit_col[paths.exit_col < paths.n_cols]):
        mask = paths.exit_col == col
        t = float(grid.times[paths.k0 + col])
        x = paths.x[mask, col]
        lo, up = lower.evaluate(t, x, left=True), upper.evaluate(t, x, left=True)
        values[mask] = np.minimum(np.maximum(0.0, lo), up)
        pushed[mask] += np.abs(values[mask])
    return values


def rbsde_backward(paths: PathBundle, phi: FieldLike, reaction: Reaction, mu: MeasureData,
                   lower: Optional[AnyBarrier] = None, upper: Optional[AnyBarrier] = None,
                   penalty: Optional[float] = None) -> OracleEstimate:
    """EDSR refletida por regressão retrógrada (Tsitsiklis-Van Roy)

    O resíduo de Skorokhod empírico é medido com limites à esquerda nos saltos
    (versão precisa) e, para contraste, com valores à direita. Uma trajetória
    morta entre datas de observação recebe o limite à esquerda no instante de
    saída, clamp(0, h₁, h₂) no ponto de fronteira.
    """
    if reaction.depends_on_y:
        raise RegimeViolation('regression oracle needs a reaction independent of y')
    _require_path_regime(mu)
    grid = paths.grid
    lower = lower if lower is not None else Barrier.none('lower')
    upper = upper if upper is not None else Barrier.none('upper')
    atoms = _atom_columns(mu, grid, paths.k0)
    jump_cols = {k - paths.k0 for k in set(lower.jump_indices(grid)) | set(upper.jump_indices(grid))
                 if k > paths.k0} | set(atoms)
    n, dt, last = paths.n_paths, grid.dt, paths.n_cols - 1
    res_left = np.zeros(n)
    res_right = np.zeros(n)
    pushed = np.zeros(n)

    def left_resolve(c: int, y_right: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """Projeção do limite à esquerda na coluna c (átomos e saltos das barreiras)"""
        if c not in jump_cols:
            return y_right
        t = float(grid.times[paths.k0 + c])
        x = paths.x[mask, c]
        pre = y_right.copy()
        for atom in atoms.get(c, []):
            pre += atom.evaluate(x)
        lo_l, up_l = lower.evaluate(t, x, left=True), upper.evaluate(t, x, left=True)
        lo_r, up_r = lower.evaluate(t, x), upper.evaluate(t, x)
        y_left = np.minimum(np.maximum(pre, lo_l), up_l)
        lift, drop = np.maximum(lo_l - pre, 0.0), np.maximum(pre - up_l, 0.0)
        res_left[mask] += _skorokhod(y_left, lo_l, up_l, lift, drop)
        res_right[mask] += _skorokhod(y_right, lo_r, up_r, lift, drop)
        pushed[mask] += lift + drop
        return y_left

    exit_value = _exit_values(paths, lower, upper, pushed)
    alive = paths.alive(last)
    y_next = exit_value.copy()
    y_next[alive] = left_resolve(last, field_at(phi, grid, paths.x[alive, last]), alive)
    # z0 em T: não há passos e Y0 é o dado terminal
    target = y_next[alive]
    stderr = float(target.std(ddof=1) / np.sqrt(n)) if target.size > 1 else 0.0

    for c in range(last - 1, -1, -1):
        t = float(grid.times[paths.k0 + c])
        alive = paths.alive(c)
        x = paths.x[alive, c]
        target = y_next[alive] + _running(reaction, mu, t, dt, x)
        cont = _hat_regression(x, target, grid)
        lo, up = lower.evaluate(t, x), upper.evaluate(t, x)
        if penalty is None:
            y = np.minimum(np.maximum(cont, lo), up)
        else:
            weight = penalty * dt
            y = np.where(cont < lo, (cont + weight * lo) / (1.0 + weight),
                         np.where(cont > up, (cont + weight * up) / (1.0 + weight), cont))
        lift, drop = np.maximum(y - cont, 0.0), np.maximum(cont - y, 0.0)
        step_res = _skorokhod(y, lo, up, lift, drop)
        res_left[alive] += step_res
        res_right[alive] += step_res
        pushed[alive] += lift + drop
        y_next = exit_value.copy()
        y_next[alive] = left_resolve(c, y, alive) if c > 0 else y
        if c == 0:
            stderr = float(target.std(ddof=1) / np.sqrt(n))

    value = float(y_next[paths.alive(0)].mean())
    sqrt_n = np.sqrt(n)
    diagnostics = {
        'skorokhod_left': float(res_left.mean()),
        'skorokhod_left_stderr': float(res_left.std(ddof=1) / sqrt_n),
        'skorokhod_right': float(res_right.mean()),
        'skorokhod_right_stderr': float(res_right.std(ddof=1) / sqrt_n),
        'mean_push': float(pushed.mean()),
        'penalty': penalty,
        'penalty_direction': None if penalty is None else 'from below toward the reflected value',
        **tail_quantiles(target),
    }
    logger.info(f"EDSR refletida: Y0={value:.6g} ± {stderr:.2g}, "
                f"Skorokhod(esq)={diagnostics['skorokhod_left']:.3g}")
    return OracleEstimate(value, stderr, n, 'regression', diagnostics)


def _skorokhod(y: np.ndarray, lo: np.ndarray, up: np.ndarray, lift: np.ndarray,
               drop: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    pos = lift > 0.0
    out[pos] += (y[pos] - lo[pos]) * lift[pos]
    neg = drop > 0.0
    out[neg] += (up[neg] - y[neg]) * drop[neg]
    return out


StrategyRule = Callable[[int, float, np.ndarray, np.ndarray], np.ndarray]


def strategy_payoffs(paths: PathBundle, problem, rule: Optional[StrategyRule],
                     j0: int) -> Tuple[np.ndarray, np.ndarray]:
    """Lucro realizado por trajetória e número de comutações

    rule(k, t, x, modos) devolve os novos modos; None significa nunca comutar.
    """
    grid = paths.grid
    for mode in problem.modes:
        if mode.coupled is not None or mode.reaction.depends_on_y:
            raise RegimeViolation('strategy evaluation needs y-independent reactions')
        _require_path_regime(mode.mu)
    atoms = [_atom_columns(mode.mu, grid, paths.k0) for mode in problem.modes]
    modes = np.full(paths.n_paths, j0, dtype=int)
    payoff = np.zeros(paths.n_paths)
    switches = np.zeros(paths.n_paths, dtype=int)
    last = paths.n_cols - 1

    for c in range(last):
        k = paths.k0 + c
        t = float(grid.times[k])
        alive = paths.alive(c)
        x = paths.x[:, c]
        if rule is not None and np.any(alive):
            current = modes[alive]
            proposed = np.asarray(rule(k, t, x[alive], current.copy()), dtype=int)
            changed = proposed != current
            if np.any(changed):
                idx = np.nonzero(alive)[0][changed]
                sources, targets = current[changed], proposed[changed]
                for j, i in sorted(set(zip(sources.tolist(), targets.tolist()))):
                    pick = idx[(sources == j) & (targets == i)]
                    payoff[pick] -= problem.cost(j, i, t, x[pick])
                modes[idx] = targets
                switches[idx] += 1
        for j, mode in enumerate(problem.modes):
            mask = alive & (modes == j)
            if np.any(mask):
                payoff[mask] += _running(mode.reaction, mode.mu, t, grid.dt, x[mask])
            for atom in atoms[j].get(c + 1, []):
                nxt = paths.alive(c + 1) & (modes == j)
                payoff[nxt] += atom.evaluate(paths.x[nxt, c + 1])

    alive = paths.alive(last)
    for j, mode in enumerate(problem.modes):
        mask = alive & (modes == j)
        payoff[mask] += field_at(mode.phi, grid, paths.x[mask, last])
    return payoff, switches


def evaluate_strategy(paths: PathBundle, problem, rule: Optional[StrategyRule],
                      j0: int) -> OracleEstimate:
    """Lucro esperado de uma estratégia de comutação ao longo das trajetórias"""
    payoff, switches = strategy_payoffs(paths, problem, rule, j0)
    return OracleEstimate(float(payoff.mean()),
                          float(payoff.std(ddof=1) / np.sqrt(paths.n_paths)),
                          paths.n_paths, 'forward-MC',
                          {'mean_switches': float(switches.mean()), 'start_mode': j0,
                           **tail_quantiles(payoff)})


def paired_gap(reference: np.ndarray, candidate: np.ndarray) -> Tuple[float, float]:
    """Média e erro padrão de candidate - reference nas mesmas trajetórias"""
    diff = candidate - reference
    return float(diff.mean()), float(diff.std(ddof=1) / np.sqrt(diff.size))


class RandomSkipRule:
    """Ignora cada comutação proposta com probabilidade p"""

    def __init__(self, rule: StrategyRule, p: float, seed: int):
        self.rule = rule
        self.p = p
        self.rng = np.random.default_rng(seed)

    def __call__(self, k, t, x, modes):
        proposed = self.rule(k, t, x, modes)
        skip = self.rng.random(np.shape(modes)) < self.p
        return np.where(skip, modes, proposed)


class RandomSwitchRule:
    """Segue a regra base e, com probabilidade p, salta para um modo adjacente"""

    def __init__(self, rule: Optional[StrategyRule], problem, p: float, seed: int):
        self.rule = rule
        self.problem = problem
        self.p = p
        self.rng = np.random.default_rng(seed)

    def __call__(self, k, t, x, modes):
        out = modes.copy() if self.rule is None else np.asarray(self.rule(k, t, x, modes))
        jump = self.rng.random(np.shape(modes)) < self.p
        draws = self.rng.random(np.shape(modes))
        for j, mode in enumerate(self.problem.modes):
            adjacency = np.array(sorted(mode.adjacency), dtype=int)
            mask = jump & (out == j)
            if adjacency.size and np.any(mask):
                out = out.copy()
                out[mask] = adjacency[np.minimum((draws[mask] * adjacency.size).astype(int),
                                                 adjacency.size - 1)]
        return out


class LaggedRule:
    """Decide com o campo de valores de `lag` passos mais tarde"""

    def __init__(self, rule, lag: int):
        self.rule = rule
        self.lag = lag

    def __call__(self, k, t, x, modes):
        k_lag = min(k + self.lag, self.rule.solution.grid.n_t)
        return self.rule(k_lag, t, x, modes)


def perturbed_rules(rule, problem, count: int, seed: int = 0) -> List[Tuple[str, Optional[StrategyRule]]]:
    """Estratégias subótimas de referência: nunca comutar, atrasos, omissões e ruído"""
    from .switching import SwitchingRule

    candidates: List[Tuple[str, Optional[StrategyRule]]] = [('never-switch', None)]
    for position in range(max(count - 1, 0)):
        variant = position % 4
        level = position // 4 + 1
        if variant == 0:
            candidates.append((f'lag-{2 * level}', LaggedRule(rule, 2 * level)))
        elif variant == 1:
            candidates.append((f'skip-{0.1 * level:.1f}',
                               RandomSkipRule(rule, min(0.1 * level, 1.0), seed + position)))
        elif variant == 2:
            candidates.append((f'noise-{0.02 * level:.2f}',
                               RandomSwitchRule(rule, problem, min(0.02 * level, 1.0), seed + position)))
        else:
            early = SwitchingRule(rule.solution, problem, eps_switch=rule.eps + 0.05 * level)
            candidates.append((f'early-{0.05 * level:.2f}', early))
    return candidates[:count]
