"""Hermite-Gauss bases of the two parametric amplifiers and their overlap.

The squeezer and the amplifier have different gains, so their Schmidt
modes have different angular widths.  Expressing one basis in the other
gives the overlap matrix g, whose odd entries vanish by parity.

Run: python demos/01_mode_bases.py
"""
import numpy as np

from multisqueeze.hg_modes import default_grid, hermite_gauss_basis, overlap_matrix, width_schedule

grid = default_grid()
print(f"grid: {grid.n_points} points, spacing {grid.spacing * 1e6:.0f} urad")

# widths grow with gain: sigma = sigma0 * sqrt(1 + c G)
s_sq = width_schedule(1.05, 1e-3, 0.1)
s_amp = width_schedule(4.0, 1e-3, 0.1)
print(f"squeezer width {s_sq * 1e3:.3f} mrad, amplifier width {s_amp * 1e3:.3f} mrad")

squeezer = hermite_gauss_basis(grid, s_sq, 24, "squeezer")
amplifier = hermite_gauss_basis(grid, s_amp, 24, "amplifier")

gram = squeezer.modes @ squeezer.modes.T * grid.spacing
print(f"orthonormality error of the squeezer basis: {np.abs(gram - np.eye(24)).max():.1e}")

g = overlap_matrix(squeezer, amplifier)
print("\ng (first 6 x 6): parity makes it a checkerboard")
print(np.array2string(g.entries[:6, :6], precision=3, suppress_small=True))
print("\nrow completeness sum_n g_ln^2 for l = 0..8:")
print(np.round((g.entries**2).sum(axis=1)[:9], 6))
