"""Chains of partial-trace consistency constraints.

A chain has ``n`` variable slots. Slot ``j`` holds an operator on
``C_j ⊗ R_j`` and the constraints read

    tr_{C_0} X_0 = tr(X_0) Q,    tr_{C_j} X_j = Phi_{j-1}(X_{j-1}),

with each ``Phi`` completely positive and trace preserving. A referee's
transcript is the case ``C_j = C``, ``R_j = V`` and
``Phi_j(X) = tr_C(V_{j+1} X V_{j+1}^*)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import qmath
from .qmath import dag


@dataclass(frozen=True, eq=False)
class ConsistencyChain:
    traced_dims: tuple
    residual_dims: tuple
    Q: np.ndarray
    forward: tuple  # Phi_0..Phi_{n-2}
    adjoint: tuple  # Phi_0^*..Phi_{n-2}^*
    # optional batched forms acting on a stack of slots 0..n-2 (resp. residuals 1..n-1)
    forward_stack: Optional[Callable] = None
    adjoint_stack: Optional[Callable] = None

    @property
    def uniform(self) -> bool:
        """All slots share one shape and batched maps are available."""
        return (
            len(set(self.traced_dims)) == 1
            and len(set(self.residual_dims)) == 1
            and (self.n == 1 or (self.forward_stack is not None and self.adjoint_stack is not None))
        )

    @property
    def n(self) -> int:
        return len(self.traced_dims)

    @property
    def slot_dims(self) -> tuple:
        return tuple(c * r for c, r in zip(self.traced_dims, self.residual_dims))

    def shape(self, j: int) -> qmath.SpaceShape:
        return qmath.SpaceShape.of(C=self.traced_dims[j], R=self.residual_dims[j])

    def tr_C(self, j: int, X: np.ndarray) -> np.ndarray:
        c, r = self.traced_dims[j], self.residual_dims[j]
        return np.einsum("cvcw->vw", X.reshape(c, r, c, r))

    def lift(self, j: int, Y: np.ndarray) -> np.ndarray:
        """``I_C ⊗ Y``."""
        c, r = self.traced_dims[j], self.residual_dims[j]
        out = np.zeros((c, r, c, r), dtype=np.result_type(Y, complex))
        idx = np.arange(c)
        out[idx, :, idx, :] = Y
        return out.reshape(c * r, c * r)

    def residuals(self, states: Sequence[np.ndarray]) -> list:
        """Residual operators on ``R_j`` (linearised first constraint)."""
        if len(states) != self.n:
            raise ValueError(f"expected {self.n} states, got {len(states)}")
        out = [self.tr_C(0, states[0]) - np.trace(states[0]) * self.Q]
        for j in range(1, self.n):
            out.append(self.tr_C(j, states[j]) - self.forward[j - 1](states[j - 1]))
        return out

    def residuals_stacked(self, X: np.ndarray) -> np.ndarray:
        """:meth:`residuals` for a uniform chain, slots stacked along axis 0."""
        n, c, r = self.n, self.traced_dims[0], self.residual_dims[0]
        marg = np.einsum("ncvcw->nvw", X.reshape(n, c, r, c, r))
        out = np.empty_like(marg)
        out[0] = marg[0] - np.trace(X[0]) * self.Q
        if n > 1:
            out[1:] = marg[1:] - self.forward_stack(X[:-1])
        return out

    def f_adjoint_stacked(self, P: np.ndarray, Pi: np.ndarray, weight: float) -> np.ndarray:
        """:meth:`f_adjoint` for a uniform chain, slots stacked along axis 0."""
        n, c, r = self.n, self.traced_dims[0], self.residual_dims[0]
        lifted = np.zeros((n, c, r, c, r), dtype=complex)
        idx = np.arange(c)
        lifted[:, idx, :, idx, :] = Pi  # broadcasts over the diagonal C index
        comps = weight * lifted.reshape(n, c * r, c * r)
        if n > 1:
            comps[:-1] -= weight * self.adjoint_stack(Pi[1:])
        comps[-1] += P
        overlap = np.real(np.vdot(self.Q, Pi[0]))
        comps[0] -= weight * overlap * np.eye(c * r)
        return comps

    def residual_norms(self, states: Sequence[np.ndarray]) -> list:
        return [0.5 * qmath.trace_norm(Z) for Z in self.residuals(states)]

    def f_map(self, states: Sequence[np.ndarray], weight: float):
        """``(X_last, [weight * residual_j])`` with residuals in slot order."""
        return states[-1], [weight * Z for Z in self.residuals(states)]

    def f_adjoint(self, P: np.ndarray, Pi_list: Sequence[np.ndarray], weight: float) -> list:
        """Adjoint of :meth:`f_map`, components in slot order."""
        n = self.n
        comps = []
        for j in range(n):
            Cj = weight * self.lift(j, Pi_list[j])
            if j + 1 < n:
                Cj = Cj - weight * self.adjoint[j](Pi_list[j + 1])
            comps.append(Cj)
        comps[-1] = comps[-1] + P
        overlap = np.real(np.trace(self.Q @ Pi_list[0]))
        comps[0] = comps[0] - weight * overlap * np.eye(self.slot_dims[0])
        return comps

    def round(self, states: Sequence[np.ndarray]) -> list:
        """Round arbitrary densities to a consistent chain, slot by slot.

        Each slot keeps the largest fidelity with its input allowed by the
        corrected marginal.
        """
        if len(states) != self.n:
            raise ValueError(f"expected {self.n} states, got {len(states)}")
        out = []
        target = self.Q
        for j, X in enumerate(states):
            X = qmath.clean_density(X)
            Xp = qmath.fidelity_completion(self.tr_C(j, X), target, X, self.shape(j), "C")
            out.append(Xp)
            if j + 1 < self.n:
                target = self.forward[j](Xp)
        return out


def referee_chain(R) -> ConsistencyChain:
    """The transcript chain of a referee's interaction with Alice."""
    V = [R.V(i) for i in range(1, R.a)]
    Vd = [dag(v) for v in V]
    dC, dV = R.d_C, R.d_V

    def make_forward(v, vd):
        def phi(X):
            return np.einsum("cvcw->vw", (v @ X @ vd).reshape(dC, dV, dC, dV))

        return phi

    def make_adjoint(v, vd):
        idx = np.arange(dC)

        def phi_star(Y):
            lifted = np.zeros((dC, dV, dC, dV), dtype=complex)
            lifted[idx, :, idx, :] = Y
            return vd @ lifted.reshape(dC * dV, dC * dV) @ v

        return phi_star

    Vs = np.array(V).reshape(-1, dC * dV, dC * dV)
    Vds = np.conj(np.swapaxes(Vs, 1, 2))
    idx = np.arange(dC)

    def forward_stack(X):
        Y = Vs @ X @ Vds
        return np.einsum("ncvcw->nvw", Y.reshape(-1, dC, dV, dC, dV))

    def adjoint_stack(Y):
        lifted = np.zeros((len(Y), dC, dV, dC, dV), dtype=complex)
        lifted[:, idx, :, idx, :] = Y
        return Vds @ lifted.reshape(-1, dC * dV, dC * dV) @ Vs

    return ConsistencyChain(
        traced_dims=(dC,) * R.a,
        residual_dims=(dV,) * R.a,
        Q=R.initial_marginal,
        forward=tuple(make_forward(v, vd) for v, vd in zip(V, Vd)),
        adjoint=tuple(make_adjoint(v, vd) for v, vd in zip(V, Vd)),
        forward_stack=forward_stack,
        adjoint_stack=adjoint_stack,
    )


def kraus_chain(
    traced_dims: Sequence[int],
    residual_dims: Sequence[int],
    Q: np.ndarray,
    kraus: Sequence[Sequence[np.ndarray]],
) -> ConsistencyChain:
    def make_forward(ks):
        def phi(X):
            return sum(K @ X @ dag(K) for K in ks)

        return phi

    def make_adjoint(ks):
        def phi_star(Y):
            return sum(dag(K) @ Y @ K for K in ks)

        return phi_star

    forward_stack = adjoint_stack = None
    counts = {len(ks) for ks in kraus}
    shapes = {np.shape(K) for ks in kraus for K in ks}
    if kraus and len(counts) == 1 and len(shapes) == 1:
        Ks = np.array([[np.asarray(K, dtype=complex) for K in ks] for ks in kraus])  # (n-1, k, out, in)
        Kds = np.conj(np.swapaxes(Ks, 2, 3))

        def forward_stack(X):
            return (Ks @ X[:, None] @ Kds).sum(axis=1)

        def adjoint_stack(Y):
            return (Kds @ Y[:, None] @ Ks).sum(axis=1)

    return ConsistencyChain(
        traced_dims=tuple(traced_dims),
        residual_dims=tuple(residual_dims),
        Q=np.asarray(Q, dtype=complex),
        forward=tuple(make_forward(ks) for ks in kraus),
        adjoint=tuple(make_adjoint(ks) for ks in kraus),
        forward_stack=forward_stack,
        adjoint_stack=adjoint_stack,
    )

