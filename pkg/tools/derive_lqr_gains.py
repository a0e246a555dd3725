"""Derive the cart-pole balancing gains baked into demonstrators.py.

Linearizes the exact discrete step around the upright equilibrium with
central finite differences, then solves the discrete-time Riccati equation
by fixed-point iteration (Q = I, R = 0.1). Run from the repository root:

    python tools/derive_lqr_gains.py

and paste the printed vector into CARTPOLE_LQR_GAINS.
"""

import numpy as np

from counterbc.envs import cartpole_dynamics

EPS = 1e-6
Q = np.eye(4)
R = np.array([[0.1]])


def linearize():
    A = np.zeros((4, 4))
    B = np.zeros((4, 1))
    for j in range(4):
        hi = np.zeros(4)
        hi[j] = EPS
        A[:, j] = (cartpole_dynamics(hi, 0.0) - cartpole_dynamics(-hi, 0.0)) / (2 * EPS)
    B[:, 0] = (
        cartpole_dynamics(np.zeros(4), EPS) - cartpole_dynamics(np.zeros(4), -EPS)
    ) / (2 * EPS)
    return A, B


def solve_dare(A, B, max_iter=200_000, rtol=1e-12):
    P = Q.copy()
    for _ in range(max_iter):
        BtPB = B.T @ P @ B
        K = np.linalg.solve(R + BtPB, B.T @ P @ A)
        P_next = Q + A.T @ P @ (A - B @ K)
        if np.max(np.abs(P_next - P)) < rtol * max(1.0, np.max(np.abs(P_next))):
            return P_next
        P = P_next
    raise RuntimeError("Riccati iteration did not converge")


def main():
    A, B = linearize()
    P = solve_dare(A, B)
    K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)[0]
    print("A =\n", A)
    print("B =\n", B)
    print("gains K (action = clip(-K @ state, -1, 1)):")
    print([repr(float(k)) for k in K])


if __name__ == "__main__":
    main()
