"""Closed-form solution of the two-bus power flow used in test_powerflow.cpp.

Slack bus 0 at 1.0 pu / 0 rad, load bus 1 with injection S = P + jQ,
single series branch with admittance y = y_mag * exp(j*theta).

From S = W * conj(y (W - 1)) with W the load-bus phasor:
    S = conj(y) * (|W|^2 - W)   =>   W = u - S/conj(y),  u = |W|^2
    |W|^2 = u  =>  (u - a)^2 + b^2 = u,  a + jb = S/conj(y)
which is a quadratic in u; the high-voltage root is the operating point.
"""
import cmath
import math

Y_MAG = 10.0
THETA = -1.4
P = -0.5
Q = -0.2

y = Y_MAG * cmath.exp(1j * THETA)
s = complex(P, Q)
c = s / y.conjugate()
a, b = c.real, c.imag

disc = (2 * a + 1) ** 2 - 4 * (a * a + b * b)
u = ((2 * a + 1) + math.sqrt(disc)) / 2  # high-voltage root
w = u - c
v = math.sqrt(u)
delta = cmath.phase(w)

assert abs(abs(w) - v) < 1e-15

# Slack injection from the same branch: S0 = V0 * conj(y (V0 - W)), V0 = 1.
s0 = (y * (1 - w)).conjugate()

print(f"v1     = {v:.15f}")
print(f"delta1 = {delta:.15f}")
print(f"p0     = {s0.real:.15f}")
print(f"q0     = {s0.imag:.15f}")
