"""How quickly polynomials close in on sigmoid, tanh and relu."""

from cryptonet.approx import DEFAULT_INTERVALS, ActivationSpec, approximation_table, min_degree_for

for kind in ("sigmoid", "tanh", "relu"):
    spec = ActivationSpec(kind, DEFAULT_INTERVALS[kind])
    p = min_degree_for(spec, 0.05)
    print(f"{kind:8s} on {spec.interval}: sup error {p.sup_error:.4f} at degree {p.degree}")

print("\nsigmoid on [-4, 4]")
for row in approximation_table(ActivationSpec("sigmoid", (-4, 4)), 9)[3:]:
    print(f"  degree {row['degree']}: chebyshev {row['chebyshev']:.2e}  minimax {row['minimax']:.2e}")
