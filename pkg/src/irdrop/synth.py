"""Seeded synthetic power grids and the exact static IR-drop solver.

The grid is a rows x cols resistor mesh. Node ``(ix, iy)`` sits at
``(ix * pitch_um, iy * pitch_um)`` and has flat index ``iy * cols + ix``.
Pad nodes are tied to VDD; every other node is solved for by nodal analysis
with the pads eliminated (Dirichlet boundary), which keeps the reduced
conductance matrix symmetric positive definite.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

from .data import Dataset, NetRecord
from .exceptions import NumericError, ValidationError

N_WINDOWS = 20
RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class PdnGrid:
    rows: int
    cols: int
    pitch_um: float
    seg_resistance_ohm: float
    pad_nodes: tuple
    vdd_mv: float = 800.0
    # Broken straps, as pairs of (ix, iy) nodes; lets callers model opens.
    open_segments: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "pad_nodes", tuple(tuple(int(v) for v in p) for p in self.pad_nodes))
        object.__setattr__(
            self,
            "open_segments",
            frozenset(frozenset(tuple(int(v) for v in n) for n in seg) for seg in self.open_segments),
        )
        if self.rows < 1 or self.cols < 1 or self.rows * self.cols < 2:
            raise ValidationError(f"grid needs rows*cols >= 2, got {self.rows}x{self.cols}")
        if not self.seg_resistance_ohm > 0:
            raise ValidationError("seg_resistance_ohm must be > 0")
        if not self.pitch_um > 0:
            raise ValidationError("pitch_um must be > 0")
        if not self.vdd_mv > 0:
            raise ValidationError("vdd_mv must be > 0")
        if not self.pad_nodes:
            raise ValidationError("grid needs at least one pad node")
        for p in self.pad_nodes:
            if not self.contains(p):
                raise ValidationError(f"pad node {p} outside {self.cols}x{self.rows} grid")

    @property
    def n_nodes(self) -> int:
        return self.rows * self.cols

    def contains(self, node) -> bool:
        ix, iy = node
        return 0 <= ix < self.cols and 0 <= iy < self.rows

    def flat(self, node) -> int:
        ix, iy = node
        return iy * self.cols + ix

    def node_of(self, flat: int) -> tuple:
        return (flat % self.cols, flat // self.cols)

    def position_um(self, node) -> tuple:
        return (node[0] * self.pitch_um, node[1] * self.pitch_um)

    def segments(self):
        """Yield (flat_a, flat_b) for every intact strap segment."""
        for iy in range(self.rows):
            for ix in range(self.cols):
                for nb in ((ix + 1, iy), (ix, iy + 1)):
                    if not self.contains(nb):
                        continue
                    if frozenset(((ix, iy), nb)) in self.open_segments:
                        continue
                    yield self.flat((ix, iy)), self.flat(nb)

    def hops_to_pad(self, node) -> int:
        return min(abs(node[0] - px) + abs(node[1] - py) for px, py in self.pad_nodes)


@dataclass(frozen=True)
class CellLoad:
    grid_node: tuple
    i_avg_a: float
    i_peak_a: float
    window: int = 0
    t_rise_s: float = 0.0
    t_fall_s: float = 0.0
    tau_s: float = 0.0
    # Current actually drawn in the ground-truth solve; defaults to i_avg_a.
    i_eff_a: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "grid_node", tuple(int(v) for v in self.grid_node))
        if not self.i_avg_a > 0:
            raise ValidationError(f"load at {self.grid_node}: i_avg_a must be > 0")
        if self.i_peak_a < self.i_avg_a:
            raise ValidationError(f"load at {self.grid_node}: i_peak_a < i_avg_a")
        if not 0 <= self.window < N_WINDOWS:
            raise ValidationError(f"load at {self.grid_node}: window {self.window} not in [0, {N_WINDOWS})")
        if min(self.t_rise_s, self.t_fall_s, self.tau_s) < 0:
            raise ValidationError(f"load at {self.grid_node}: timing fields must be >= 0")
        if self.i_eff_a is None:
            object.__setattr__(self, "i_eff_a", float(self.i_avg_a))

    def scaled(self, alpha: float) -> "CellLoad":
        return CellLoad(
            grid_node=self.grid_node,
            i_avg_a=self.i_avg_a * alpha,
            i_peak_a=self.i_peak_a * alpha,
            window=self.window,
            t_rise_s=self.t_rise_s,
            t_fall_s=self.t_fall_s,
            tau_s=self.tau_s,
            i_eff_a=self.i_eff_a * alpha,
        )


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 1
    rows: int = 64
    cols: int = 64
    pitch_um: float = 2.0
    seg_resistance_ohm: float = 4.0
    pad_pitch: int = 2
    pad_offset: int = 1
    n_cells: int = 500
    vdd_mv: float = 800.0
    i_avg_min_a: float = 2e-4
    i_avg_max_a: float = 4e-3
    peak_factor_min: float = 1.5
    peak_factor_max: float = 4.0
    t_edge_min_s: float = 5e-12
    t_edge_max_s: float = 80e-12
    tau_ref_s: float = 40e-12
    kappa: float = 0.5

    def __post_init__(self):
        if self.kappa < 0:
            raise ValidationError(f"kappa must be >= 0, got {self.kappa}")
        if self.n_cells < 0:
            raise ValidationError("n_cells must be >= 0")
        if self.pad_pitch < 1:
            raise ValidationError("pad_pitch must be >= 1")
        if not 0 < self.i_avg_min_a <= self.i_avg_max_a:
            raise ValidationError("need 0 < i_avg_min_a <= i_avg_max_a")
        if not 1.0 <= self.peak_factor_min <= self.peak_factor_max:
            raise ValidationError("need 1 <= peak_factor_min <= peak_factor_max")
        if not 0 < self.t_edge_min_s <= self.t_edge_max_s:
            raise ValidationError("need 0 < t_edge_min_s <= t_edge_max_s")
        if not self.tau_ref_s > 0:
            raise ValidationError("tau_ref_s must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)


def rc_time_constant(t_rise_s, t_fall_s):
    """RC constant whose 10-90 % edge equals the mean of the rise and fall times."""
    return 0.5 * (np.asarray(t_rise_s) + np.asarray(t_fall_s)) / math.log(9.0)


def timing_coupling(tau_s, tau_ref_s: float):
    """Monotone decreasing map f(tau) = tau_ref / (tau + tau_ref / 10), in (0, 10].

    Faster edges (small tau) draw their charge in a sharper burst and get a
    larger effective load.
    """
    tau_s = np.asarray(tau_s, dtype=float)
    return tau_ref_s / (tau_s + 0.1 * tau_ref_s)


def pad_lattice(config: SynthConfig) -> tuple:
    xs = range(config.pad_offset % config.pad_pitch, config.cols, config.pad_pitch)
    ys = range(config.pad_offset % config.pad_pitch, config.rows, config.pad_pitch)
    return tuple((ix, iy) for iy in ys for ix in xs)


def generate_circuit(config: SynthConfig):
    """Build a seeded grid and its cell loads.

    Random draws never depend on ``kappa`` so two configs that differ only in
    ``kappa`` share placements and drawn currents; only ``i_eff_a`` changes.
    """
    grid = PdnGrid(
        rows=config.rows,
        cols=config.cols,
        pitch_um=config.pitch_um,
        seg_resistance_ohm=config.seg_resistance_ohm,
        pad_nodes=pad_lattice(config),
        vdd_mv=config.vdd_mv,
    )
    pads = {grid.flat(p) for p in grid.pad_nodes}
    candidates = np.array([f for f in range(grid.n_nodes) if f not in pads], dtype=np.int64)
    if config.n_cells > len(candidates):
        raise ValidationError(
            f"n_cells={config.n_cells} exceeds the {len(candidates)} non-pad nodes of a "
            f"{config.cols}x{config.rows} grid"
        )
    rng = np.random.default_rng(config.seed)
    n = config.n_cells
    chosen = np.sort(rng.choice(candidates, size=n, replace=False)) if n else candidates[:0]
    log_lo, log_hi = math.log(config.i_avg_min_a), math.log(config.i_avg_max_a)
    i_avg = np.exp(rng.uniform(log_lo, log_hi, size=n))
    peak = rng.uniform(config.peak_factor_min, config.peak_factor_max, size=n)
    t_rise = rng.uniform(config.t_edge_min_s, config.t_edge_max_s, size=n)
    t_fall = rng.uniform(config.t_edge_min_s, config.t_edge_max_s, size=n)
    window = rng.integers(0, N_WINDOWS, size=n)
    tau = rc_time_constant(t_rise, t_fall)
    i_eff = i_avg * (1.0 + config.kappa * timing_coupling(tau, config.tau_ref_s))

    loads = [
        CellLoad(
            grid_node=grid.node_of(int(chosen[k])),
            i_avg_a=float(i_avg[k]),
            i_peak_a=float(i_avg[k] * peak[k]),
            window=int(window[k]),
            t_rise_s=float(t_rise[k]),
            t_fall_s=float(t_fall[k]),
            tau_s=float(tau[k]),
            i_eff_a=float(i_eff[k]),
        )
        for k in range(n)
    ]
    return grid, loads


def conductance_matrix(grid: PdnGrid) -> sp.csr_matrix:
    """Full grid Laplacian (S), pads not yet eliminated."""
    g = 1.0 / grid.seg_resistance_ohm
    segs = np.array(list(grid.segments()), dtype=np.int64).reshape(-1, 2)
    a, b = segs[:, 0], segs[:, 1]
    n = grid.n_nodes
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([b, a, a, b])
    vals = np.concatenate([-np.full(len(a), g), -np.full(len(a), g), np.full(len(a), g), np.full(len(a), g)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def current_vector(grid: PdnGrid, loads: Sequence[CellLoad]) -> np.ndarray:
    b = np.zeros(grid.n_nodes)
    for load in loads:
        if not grid.contains(load.grid_node):
            raise ValidationError(f"load node {load.grid_node} outside grid")
        b[grid.flat(load.grid_node)] += load.i_eff_a
    return b


@dataclass(frozen=True)
class SolveResult:
    drops_mv: np.ndarray
    residual: float
    pad_currents_a: np.ndarray


def _check_floating(grid: PdnGrid, lap: sp.csr_matrix) -> None:
    n_comp, labels = connected_components(lap, directed=False)
    if n_comp == 1:
        return
    pad_comps = {labels[grid.flat(p)] for p in grid.pad_nodes}
    for comp in range(n_comp):
        if comp in pad_comps:
            continue
        members = [grid.node_of(int(f)) for f in np.flatnonzero(labels == comp)]
        shown = ", ".join(str(m) for m in members[:8])
        more = "" if len(members) <= 8 else f", ... ({len(members)} nodes)"
        raise NumericError(f"floating component not connected to any pad: nodes {shown}{more}")


def solve_pdn(grid: PdnGrid, loads: Sequence[CellLoad]) -> SolveResult:
    lap = conductance_matrix(grid)
    _check_floating(grid, lap)
    b = current_vector(grid, loads)

    pads = np.zeros(grid.n_nodes, dtype=bool)
    pads[[grid.flat(p) for p in grid.pad_nodes]] = True
    free = np.flatnonzero(~pads)

    drop_v = np.zeros(grid.n_nodes)
    residual = 0.0
    if len(free) and np.any(b[free]):
        lap_ff = lap[free][:, free].tocsc()
        sol = spsolve(lap_ff, b[free])
        residual = float(np.linalg.norm(lap_ff @ sol - b[free]) / np.linalg.norm(b[free]))
        if not np.all(np.isfinite(sol)) or residual > RESIDUAL_TOL:
            raise NumericError(f"nodal solve failed: relative residual {residual:.3e}")
        drop_v[free] = sol

    drops_mv = drop_v * 1e3
    if drops_mv.min(initial=0.0) < -1e-9:
        raise NumericError(f"negative drop {drops_mv.min():.3e} mV; load currents must be non-negative")
    if drops_mv.max(initial=0.0) > grid.vdd_mv:
        raise NumericError(
            f"max drop {drops_mv.max():.3f} mV exceeds VDD {grid.vdd_mv} mV; loads too heavy for this grid"
        )
    # Net current leaving each pad into the mesh.
    pad_currents = -(lap @ drop_v)[pads]
    return SolveResult(drops_mv=np.clip(drops_mv, 0.0, None), residual=residual, pad_currents_a=pad_currents)


def solve_ir_drop(grid: PdnGrid, loads: Sequence[CellLoad]) -> np.ndarray:
    """Per-node static IR drop in mV, flat-indexed like :meth:`PdnGrid.flat`."""
    return solve_pdn(grid, loads).drops_mv


def derive_net_records(
    grid: PdnGrid,
    loads: Sequence[CellLoad],
    drops_mv: np.ndarray,
    provenance: str = "synthetic",
) -> Dataset:
    """One labelled record per load.

    ``resistance_ohm`` is a path-resistance proxy: Manhattan hop count to the
    nearest pad (at least one segment) times the segment resistance.
    """
    drops_mv = np.asarray(drops_mv, dtype=float)
    if drops_mv.shape != (grid.n_nodes,):
        raise ValidationError(
            f"drop vector has {drops_mv.size} entries, grid has {grid.n_nodes} nodes"
        )
    vdd_v = grid.vdd_mv * 1e-3
    records = []
    for k, load in enumerate(loads):
        x, y = grid.position_um(load.grid_node)
        hops = max(grid.hops_to_pad(load.grid_node), 1)
        records.append(
            NetRecord(
                net_id=k,
                x_um=float(x),
                y_um=float(y),
                resistance_ohm=hops * grid.seg_resistance_ohm,
                p_total_w=vdd_v * load.i_avg_a,
                i_peak_a=load.i_peak_a,
                i_avg_a=load.i_avg_a,
                t_rise_s=load.t_rise_s,
                t_fall_s=load.t_fall_s,
                tau_s=load.tau_s,
                ir_drop_mv=float(drops_mv[grid.flat(load.grid_node)]),
            )
        )
    return Dataset(records=records, vdd_mv=grid.vdd_mv, provenance=provenance)


def synthesize(config: SynthConfig):
    """generate -> solve -> derive in one call. Returns (dataset, grid, loads, solve result)."""
    grid, loads = generate_circuit(config)
    result = solve_pdn(grid, loads)
    dataset = derive_net_records(grid, loads, result.drops_mv, provenance=f"synthetic seed={config.seed}")
    return dataset, grid, loads, result
