"""Boundary expansions and numerics for constant curvature quotient graphs in hyperbolic half-space."""
