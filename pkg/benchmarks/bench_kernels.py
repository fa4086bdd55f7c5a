"""Timing of the numba kernels against the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel with the best wall time of each path and the
speed-up. The numba path is warmed up (compiled) before timing.
"""

import argparse
import math
import time

import numpy as np

from spvtrap import kernels
from spvtrap.config import table2
from spvtrap.ddsolver import (_initial_vector, _problem, _surface_terms, _unpack, default_mesh,
                              solve_equilibrium)
from spvtrap.params import Illumination
from spvtrap.qubit import (CompositeState, SimConfig, StrayFieldProfile, TrapDrive,
                           _drive_grids, bath_for_heating, displacement_band)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def dd_case():
    ms = table2()
    eq = solve_equilibrium(ms, default_mesh(ms))
    pb = _problem(ms, eq.mesh, Illumination(1e15, 1055))
    u, v, w = _unpack(_initial_vector(eq))
    mesh = eq.mesh
    surf, _ = _surface_terms(pb, u[0], v[0], w[0])

    def call(use):
        kernels.dd_assemble(u, v, w, mesh.h, mesh.volumes, pb.gvol, pb.prm, surf, use_numba=use)
    return call


def lindblad_case(nsteps=2000):
    g, nb = bath_for_heating(1e4, 2 * math.pi * 1.6e6)
    cfg = SimConfig(n_initial=6, gamma=g, n_bath=nb, coherence_band=3, n_max=60)
    drive = TrapDrive()
    dt = 2 * math.pi / (40 * drive.omega_rf)
    cgrid, thgrid, _ = _drive_grids(cfg, StrayFieldProfile(27, 57, 19e-6), drive, dt, nsteps)
    base = CompositeState.thermal(6.0, 61, 3)
    dband = displacement_band(cfg.eta, 61, 6)

    def call(use):
        s = CompositeState(base.r00.copy(), base.r01.copy(), base.r11.copy())
        kernels.lindblad_propagate(s.r00, s.r01, s.r11, dband, cgrid, thgrid, g * (nb + 1),
                                   g * nb, dt, nsteps, 100, use_numba=use)
    return call


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not kernels._HAVE_NUMBA:
        print("numba not installed; nothing to compare")
        return
    for name, call, unit in (("dd_assemble (400 nodes)", dd_case(), "call"),
                             ("lindblad_propagate (N=61, K=3, 2000 steps)", lindblad_case(),
                              "run")):
        call(True)  # compile
        t_nb = best_of(lambda: call(True), args.repeat)
        t_np = best_of(lambda: call(False), max(1, args.repeat // 2))
        print(f"{name:45s} numba {t_nb * 1e3:9.3f} ms  numpy {t_np * 1e3:9.3f} ms  "
              f"speed-up {t_np / t_nb:6.1f}x per {unit}")


if __name__ == "__main__":
    main()
