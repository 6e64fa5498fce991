# Manufactured solutions for the integrator, then refinement of the auxiliary equations.

from gevreybl.checks import aux_refinement
from gevreybl.mms import linear_mode_study, t_order_study, y_order_study

y = y_order_study()
print("y refinement", y["Ny"], "errors", [f"{e:.2e}" for e in y["errors"]],
      "orders", [f"{o:.2f}" for o in y["orders"]])

t = t_order_study()
print("dt refinement", t["dt"], "orders", [f"{o:.2f}" for o in t["orders"]])

lin = linear_mode_study()
print(f"linear mode: measured {lin['measured_rate']:.5f}, eigenvalue {lin['oracle_rate']:.5f}")

# joint (Ny, dt) refinement: residuals of the derived equations and the inner-product gaps
study = aux_refinement()
for k in ("U", "lambda", "varphi"):
    print(f"{k:7s} residual orders {[round(o, 2) for o in study['residual_orders'][k]]}"
          f"  gap orders {[round(o, 2) for o in study['gap_orders'][k]]}")
