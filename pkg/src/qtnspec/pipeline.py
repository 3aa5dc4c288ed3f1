"""Experiment stages: solve, oracle, compile, shots, spectrum.  Each stage writes into the
output directory and the next stage reads from it, so stages can also run separately."""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import platform
import time
from pathlib import Path

import numpy as np

from . import __version__
from .compiler import CompilerConfig
from .config import ExperimentConfig
from .dmrg import SolverConfig, solve
from .ed import cached_spectrum, dipole_table, project_onto_manifold, transition_set
from .mps import LEFT, RIGHT, ModelParams, heisenberg_mpo, mps_from_json, mps_to_json, to_dense
from .protocols import (
    PreparedState, adjoint_overlap, dipole_element_general, exact_observable, fourier_element,
    hamiltonian_terms, measure_energy, reconstruct_dipole_fft,
)
from .spectral import CR3, FormFactorParams, Geometry, Transition, TransitionSet, intensity, q_vectors

log = logging.getLogger(__name__)


def write_atomic(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return x


def model_params(cfg: ExperimentConfig, B=None) -> ModelParams:
    m = cfg["model"]
    return ModelParams(L=m["L"], S=float(m["S"]), J=float(m["J"]), D=float(m["D"]), g=float(m["g"]),
                       B=tuple(float(b) for b in (m["B"] if B is None else B)), periodic=m["periodic"])


def solver_config(cfg: ExperimentConfig) -> SolverConfig:
    s = dict(cfg["solver"])
    pw = s.pop("penalty_weight")
    sc = SolverConfig.for_coupling(cfg["model"]["J"], seed=cfg.seed, **s)
    if pw > 0:
        sc.penalty_weight = float(pw)
    return sc


def compiler_config(cfg: ExperimentConfig) -> CompilerConfig:
    c = cfg["compiler"]
    return CompilerConfig(eps_C=c["eps_C"], delta=c["delta"], support=c["support"], beam_width=c["beam_width"], max_gates=c["max_gates"],
                          optimizer=c["optimizer"], restarts=c["restarts"], maxiter=c["maxiter"],
                          menu=tuple(c["menu"]), seed=cfg.seed)


class Run:
    """Shared state of one experiment run."""

    def __init__(self, cfg: ExperimentConfig, out: Path, plots: bool = True):
        self.cfg = cfg
        self.out = Path(out)
        self.plots = plots
        self.p = model_params(cfg)
        self.manifest = {"config": cfg.name, "seed": cfg.seed, "versions": _versions(), "stages": {},
                         "acceptance_rates": {}}
        self._states = None
        self._spectrum = None

    # -- helpers ------------------------------------------------------------------
    def stage(self, name, fn):
        t = time.perf_counter()
        res = fn()
        self.manifest["stages"][name] = {"seconds": round(time.perf_counter() - t, 3)}
        return res

    def states(self):
        if self._states is None:
            d = self.out / "states"
            files = sorted(d.glob("state_*.json"), key=lambda f: int(f.stem.split("_")[1]))
            if not files:
                raise FileNotFoundError(f"no solved states in {d}; run the solve stage first")
            self._states = [mps_from_json(f.read_text()) for f in files]
        return self._states

    def oracle_spectrum(self):
        if self._spectrum is None and self.cfg["oracle"]["enabled"]:
            self._spectrum = cached_spectrum(self.p, self.cfg["oracle"]["n_states"], self.out / "cache")
        return self._spectrum

    def prepared(self, k: int) -> PreparedState:
        f = self.out / "circuits" / f"state_{k}.json"
        if not f.exists():
            raise FileNotFoundError(f"no circuits for state {k} in {f.parent}; run the compile stage first")
        return PreparedState.from_dict(json.loads(f.read_text()))

    # -- stages -------------------------------------------------------------------
    def solve(self):
        h = heisenberg_mpo(self.p)
        res = solve(h, solver_config(self.cfg), S=self.p.S)
        for k, st in enumerate(res.states):
            write_atomic(self.out / "states" / f"state_{k}.json",
                         mps_to_json(st, energy=res.energies[k], variance=res.variances[k]))
        self._states = res.states
        rows = [(k, res.energies[k], res.variances[k], res.converged[k]) for k in range(len(res.states))]
        write_atomic(self.out / "solver.csv", csv_text(["p", "E_dmrg", "variance", "converged"], rows))
        return res

    def oracle(self):
        spec = self.oracle_spectrum()
        if spec is None:
            return None
        rows = [(k, e) for k, e in enumerate(spec.energies)]
        write_atomic(self.out / "oracle.csv", csv_text(["p", "E_oracle"], rows))
        return spec

    def compile(self):
        c = self.cfg["compiler"]
        states = self.states()
        want = {}
        for k in c["left_states"]:
            want.setdefault(k, set()).add(LEFT)
        for k in c["right_states"]:
            want.setdefault(k, set()).add(RIGHT)
        rows = []
        for k in sorted(want):
            sides = tuple(s for s in (LEFT, RIGHT) if s in want[k])
            if c["mode"] == "exact":
                ps = PreparedState.exact(states[k], source=f"state_{k}", sides=sides)
            else:
                ps = PreparedState.compiled(states[k], compiler_config(self.cfg), source=f"state_{k}", sides=sides)
            write_atomic(self.out / "circuits" / f"state_{k}.json", json.dumps(ps.to_dict()))
            for side in sides:
                for j, sc in enumerate(ps.sites(side)):
                    gc = sc.gate_counts()
                    rows.append((k, side, j, sc.cost, gc.get("su2", 0), gc.get("so4", 0),
                                 gc.get("cnot_ry", 0), gc.get("cnot", 0), gc.get("dense", 0)))
        write_atomic(self.out / "gate_counts.csv",
                     csv_text(["state", "side", "site", "achieved_cost", "su2", "so4", "cnot_ry", "cnot", "dense"], rows))

    def shots(self):
        cfg = self.cfg
        seed = cfg.seed
        e = cfg["energy"]
        solver_rows = _read_csv(self.out / "solver.csv")
        spec = self.oracle_spectrum()
        rows = []
        const, terms = hamiltonian_terms(self.p)
        for k in e["states"]:
            ps = self.prepared(k)
            est, tabs = measure_energy(ps, self.p, e["n_shots"], seed=seed + 1000 * k)
            for name, t in tabs.items():
                self.manifest["acceptance_rates"][f"energy/state_{k}/{name}"] = t.acceptance_rate
            replay = exact_observable(ps.replay(LEFT), const, terms, ps.n_phys)
            eo = spec.energies[k] if spec is not None and k < len(spec.energies) else float("nan")
            rows.append((k, float(solver_rows[k]["E_dmrg"]), eo, replay, est.mean, est.stderr))
        write_atomic(self.out / "energies.csv",
                     csv_text(["p", "E_dmrg", "E_oracle", "E_circuit_exact", "E_qtn", "E_qtn_stderr"], rows))
        if e["scaling_shots"]:
            self._scaling(e, const, terms)
        if cfg["overlap"]["pairs"]:
            self._overlaps()
        if cfg["dipole"]["methods"]:
            self._dipoles(spec)

    def _scaling(self, e, const, terms):
        k = e["scaling_state"]
        ps = self.prepared(k)
        ref = float(_read_csv(self.out / "solver.csv")[k]["E_dmrg"])
        rows = []
        for n in e["scaling_shots"]:
            est, _ = measure_energy(ps, self.p, n, seed=self.cfg.seed + 7 * n)
            rows.append((n, est.mean, est.stderr, abs(est.mean - ref) / abs(ref)))
        write_atomic(self.out / "shot_scaling.csv", csv_text(["n_shots", "E_qtn", "stderr", "rel_error"], rows))
        if self.plots:
            from .plots import error_vs_shots
            error_vs_shots(rows, self.out / "error_vs_shots.svg")

    def _overlaps(self):
        o = self.cfg["overlap"]
        res = []
        for a, b in o["pairs"]:
            r = adjoint_overlap(self.prepared(a), self.prepared(b), o["n_shots"], self.cfg.seed + 31 * a + b)
            self.manifest["acceptance_rates"][f"overlap/{a}-{b}"] = r["acceptance_rate"]
            res.append({"a": a, "b": b, **r})
        write_atomic(self.out / "overlaps.json", json.dumps(res, indent=1, sort_keys=True))

    def _dipoles(self, spec):
        d = self.cfg["dipole"]
        p, alpha = d["p"], d["alpha"]
        ps0, psp = self.prepared(0), self.prepared(p)
        L = self.p.L
        cols = {}
        if spec is not None:
            states = self.states()
            v0 = project_onto_manifold(spec, to_dense(states[0]), spec.energies[0], 1e-6)
            E_p = float(_read_csv(self.out / "solver.csv")[p]["E_dmrg"])
            vp = project_onto_manifold(spec, to_dense(states[p]), _nearest(spec.energies, E_p), 1e-6)
            a = "xyz".index(alpha)
            tab = dipole_table(self.p, v0, vp)
            cols["O_oracle"] = [tab[a, a, 0, j].real for j in range(L)]
        if "fourier" in d["methods"]:
            el, se = {}, {}
            for k in range(L):
                r = fourier_element(ps0, psp, alpha, k, d["n_shots"], self.cfg.seed + k)
                el[k], se[k] = r["value"], r["stderr"]
                self.manifest["acceptance_rates"][f"fourier/k{k}"] = r["acceptance_rate"]
            cols["O_fourier"] = [reconstruct_dipole_fft(el, j).real for j in range(L)]
            cols["O_fourier_stderr"] = [float(np.sqrt(sum(se[k] ** 2 for k in range(L)))) / L] * L
        if "swap" in d["methods"]:
            vals, errs = [], []
            for j in range(L):
                r = dipole_element_general(ps0, psp, 0, j, alpha, alpha, d["n_shots"],
                                           self.cfg.seed + 100 + j, d["swap_mode"])
                vals.append(r["value"].real)
                errs.append(r["stderr_re"])
            cols["O_swap"], cols["O_swap_stderr"] = vals, errs
        names = list(cols)
        rows = [(j, *(cols[n][j] for n in names)) for j in range(L)]
        write_atomic(self.out / "dipole_elements.csv", csv_text(["d", *names], rows))

    def spectrum(self):
        sp = self.cfg["spectrum"]
        geo = Geometry.ring(self.p.L, sp["radius"], np.deg2rad(sp["second_rotation_deg"]))
        qs = q_vectors(np.linspace(sp["q_min"], sp["q_max"], sp["n_q"]), sp["q_direction"])
        om = np.linspace(sp["omega_min"], sp["omega_max"], sp["n_omega"])
        ff = FormFactorParams(CR3.j0, CR3.j2, self.p.g, CR3.e0, CR3.e2)
        kw = dict(params=ff, fwhm=sp["fwhm"], include_prefactor=sp["include_prefactor"])
        grids = {}
        if sp["source"] in ("oracle", "both"):
            spec = self.oracle_spectrum()
            grids["oracle"] = intensity(transition_set(spec, sp["states"]), geo, qs, om, **kw)
        if sp["source"] in ("qtn", "both"):
            grids["qtn"] = intensity(self.qtn_transitions(sp), geo, qs, om, **kw)
        for name, g in grids.items():
            write_atomic(self.out / f"spectrum_{name}.csv", g.to_csv())
        first = grids.get("qtn", grids.get("oracle"))
        write_atomic(self.out / "spectrum.csv", first.to_csv())
        if self.plots:
            from .plots import intensity_map
            intensity_map(first, self.out / "intensity_map.svg")
        return grids

    def qtn_transitions(self, sp) -> TransitionSet:
        solver_rows = _read_csv(self.out / "solver.csv")
        energies = [float(r["E_dmrg"]) for r in solver_rows]
        return qtn_transitions(self.states(), energies, sp["states"], sp["swap_shots"],
                               self.cfg.seed, sp["swap_mode"])

    def field_scan(self):
        fs = self.cfg["field_scan"]
        u = np.asarray(fs["direction"], float)
        u = u / np.linalg.norm(u)
        Bs = np.linspace(0, fs["B_max"], fs["n_B"])
        rows = []
        for B in Bs:
            spec = cached_spectrum(model_params(self.cfg, tuple(B * u)), fs["n_levels"], self.out / "cache")
            rows.append((B, *spec.energies))
        write_atomic(self.out / "levels_vs_B.csv",
                     csv_text(["B", *[f"E{k}" for k in range(fs["n_levels"])]], rows))
        if self.plots:
            from .plots import level_diagram
            level_diagram(rows, self.out / "levels_vs_B.svg")

    def finish(self):
        path = self.out / "manifest.json"
        if path.exists():
            prev = json.loads(path.read_text())
            for key in ("stages", "acceptance_rates"):
                prev.get(key, {}).update(self.manifest[key])
                self.manifest[key] = prev.get(key, self.manifest[key])
        write_atomic(path, json.dumps(self.manifest, indent=1, sort_keys=True))


def _nearest(energies, e) -> float:
    energies = np.asarray(energies)
    return float(energies[np.argmin(np.abs(energies - e))])


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _versions() -> dict:
    import numpy
    import scipy
    out = {"qtnspec": __version__, "python": platform.python_version(),
           "numpy": numpy.__version__, "scipy": scipy.__version__}
    try:
        import numba
        out["numba"] = numba.__version__
    except ImportError:  # pragma: no cover
        pass
    return out


def run_all(cfg: ExperimentConfig, out: Path, plots: bool = True) -> Path:
    r = Run(cfg, out, plots)
    r.stage("solve", r.solve)
    if cfg["oracle"]["enabled"]:
        r.stage("oracle", r.oracle)
    c = cfg["compiler"]
    if c["left_states"] or c["right_states"]:
        r.stage("compile", r.compile)
        r.stage("shots", r.shots)
    if cfg["spectrum"]["enabled"]:
        r.stage("spectrum", r.spectrum)
    if cfg["field_scan"]["enabled"]:
        r.stage("field_scan", r.field_scan)
    r.finish()
    return r.out


def qtn_transitions(states: list, energies: list, ids, n_shots: int, seed: int,
                    mode: str = "marginal") -> TransitionSet:
    """Dipole tables of every (alpha, beta, i, j) from SWAP tests on solved MPS states."""
    ps0 = PreparedState.exact(states[0], sides=(LEFT,))
    L = states[0].L
    out = []
    for p in sorted(ids, key=lambda k: energies[k]):
        psp = PreparedState.exact(states[p], sides=(LEFT,))
        tab = np.zeros((3, 3, L, L), complex)
        vre = np.zeros((3, 3, L, L))
        vim = np.zeros((3, 3, L, L))
        for a, b in np.ndindex(3, 3):
            for i, j in np.ndindex(L, L):
                sd = seed + (((p * 3 + a) * 3 + b) * L + i) * L + j
                r = dipole_element_general(ps0, psp, i, j, "xyz"[a], "xyz"[b], n_shots, sd, mode)
                tab[a, b, i, j] = r["value"]
                vre[a, b, i, j] = r["stderr_re"] ** 2
                vim[a, b, i, j] = r["stderr_im"] ** 2
        out.append(Transition(energies[p] - energies[0], tab, vre, vim, f"p={p}"))
    return TransitionSet(out)
