"""Tour of the periodic spectral toolbox.

Builds a grid, plays with transforms, derivatives, the anisotropic
operators, dealiasing and the norm family used by the remainder studies.
Run as: python demos/01_spectral_toolbox.py
"""

import numpy as np

import disperlim as dl

grid = dl.build_grid([64, 64], [2 * np.pi, 2 * np.pi])
x, y = grid.meshgrid()
f = dl.RealField(grid, np.sin(3 * x) * np.cos(2 * y))

print("== transforms ==")
F = dl.forward_transform(f)
back = dl.inverse_transform(F)
print(f"round-trip max error     : {np.max(np.abs(back.values - f.values)):.2e}")
print(f"Hermitian symmetry defect: {F.hermitian_defect():.2e}")

print("\n== derivatives ==")
df = dl.spectral_derivative(f, axis=0, order=1)
exact = 3 * np.cos(3 * x) * np.cos(2 * y)
print(f"d/dx1 error              : {np.max(np.abs(df.values - exact)):.2e}")

print("\n== anisotropic operators (2D carries sqrt(eps) on the transverse axis) ==")
params = dl.ScalingParams(epsilon=0.04, ion_temperature=0.0, dim=2)
grad = dl.weighted_gradient(dl.RealField(grid, np.sin(y)), params)
print(f"transverse component peak: {grad[1].max_abs():.3f}  (expect 0.2 = sqrt(0.04))")

print("\n== norms ==")
print(f"L2 of sin(3x)cos(2y)     : {dl.sobolev_norm(f, 0):.6f} "
      f"(exact {np.sqrt(np.pi ** 2):.6f})")
for s in range(5):
    print(f"  H^{s} norm             : {dl.sobolev_norm(f, s):.4f}")
print("triple norm (potential role) with eps = 0.1:",
      f"{dl.triple_norm(f, 'potential', dl.ScalingParams(epsilon=0.1, ion_temperature=0.0, dim=2), 0):.4f}")

print("\n== streamwise antiderivative ==")
anti = dl.antiderivative_x1(dl.RealField(grid, np.cos(x)))
print(f"antiderivative of cos(x1): max error vs sin(x1) = "
      f"{np.max(np.abs(anti.values - np.sin(x))):.2e}")
