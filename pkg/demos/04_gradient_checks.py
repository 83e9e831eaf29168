"""Finite-difference verification of every analytic gradient.

Each loss ships its own exact gradient; this script runs the same
verification suites as `voxalign gradcheck`, comparing against central
finite differences over seeded random instances, including a
per-parameter sweep of a tiny end-to-end model.
"""

from voxalign.verification import loss_gradient_suite, model_gradient_suite

print("loss gradients (20 seeds each):")
for result in loss_gradient_suite(20):
    status = "ok " if result.passed else "BAD"
    print(f"  [{status}] {result.name:28s} max rel err {result.max_error:.2e}"
          f"  (budget {result.threshold:.0e})")

print()
print("full model backward, every parameter of a 194-parameter network:")
for result in model_gradient_suite(20):
    status = "ok " if result.passed else "BAD"
    print(f"  [{status}] {result.name:28s} max rel err {result.max_error:.2e}"
          f"  (budget {result.threshold:.0e})")
