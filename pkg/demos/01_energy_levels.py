"""
Defect level structure at the working field
============================================

Builds the NV, P1 and X spin Hamiltonians at B0 = 37.2 mT (tilted 0.1
degrees off the crystal z axis), prints their eigenvalues, and lists
every drive-allowed transition with its matrix-element factor.  The
off-axis NV 2<->3 line (near 732 MHz at this field) is the sensor
transition; the six P1 lines and the X line near 1042 MHz are the
target spins whose concentration the toolkit estimates.

Run from the repository root:

    python3 demos/01_energy_levels.py
"""

import numpy as np

from nvdeer import (FieldConfiguration, compute_sigma, eigensystem,
                    nv_line_table, nv_offaxis_member, p1_ensemble,
                    p1_line_table, static_hamiltonian, x_line_frequency,
                    x_member)

field = FieldConfiguration(b0_mag_mt=37.2, tilt_deg=0.1, rabi_mhz=2.0,
                           drive_freq_mhz=1042.0)

# ---------------------------------------------------------------------
# 1. NV ground-state levels, on-axis vs off-axis
# ---------------------------------------------------------------------
# The zero-field splitting dominates; the 109.5 degree tilt of the
# off-axis families mixes the spin states and shifts the levels.
member = nv_offaxis_member()
h0 = static_hamiltonian(member, field)
w, _ = eigensystem(h0)
print("off-axis NV ground eigenvalues (MHz):",
      ", ".join(f"{x:.1f}" for x in w))

print("\ndrive-allowed NV lines:")
for f_r, element, lo, hi, label in nv_line_table(field):
    print(f"  {label:<6s} |{lo}> <-> |{hi}>  f = {f_r:8.1f} MHz"
          f"   drive element = {element:.3f}")

# sigma for the sensor transition, straight from the eigenvectors
sigma_23 = compute_sigma(h0, 2, 3)
print(f"\nsensor transition sigma (off-axis 2<->3): {sigma_23:.4f}")

# ---------------------------------------------------------------------
# 2. P1 hyperfine lines
# ---------------------------------------------------------------------
# Each P1 electron couples to its 14N nucleus (I = 1).  With four
# orientation families the spectrum collapses to six lines, and the two
# central ones overlap within their width, so five groups are resolved.
rows = p1_line_table(field)
print(f"\nP1 line table ({len(rows)} lines):")
for f_r, amp in rows:
    print(f"  f = {f_r:8.2f} MHz   weight = {amp:.4f}")

members = p1_ensemble(merge_off_axis=True)
print(f"P1 ensemble members after merging off-axis families: "
      f"{len(members)}")

# ---------------------------------------------------------------------
# 3. The X line
# ---------------------------------------------------------------------
# X is a bare S=1/2 species: a single line at gamma_e * B0 that lands on
# the shoulder of the central P1 group.
f_x = x_line_frequency(field)
print(f"\nX line: {f_x:.2f} MHz (free-electron g)")

h_x = static_hamiltonian(x_member(), field)
w_x, _ = eigensystem(h_x)
print("X eigenvalues (MHz):", ", ".join(f"{x:+.2f}" for x in w_x))
print(f"X splitting = {w_x[1] - w_x[0]:.2f} MHz, "
      f"expected {28.025 * 37.2:.2f} MHz")

# The central P1 group and the X line are close; their separation is the
# quantity the two-species stage of the fit has to resolve.
f_mid = np.sort([r[0] for r in rows])[2:4].mean()
print(f"\ncentral P1 group at {f_mid:.2f} MHz, X offset "
      f"{f_x - f_mid:+.2f} MHz")
