"""Odd-order operators commuting with H^(l) from closed chains of Darboux-Crum steps."""
import logging
from dataclasses import dataclass

import numpy as np

import config
from darboux import closed_form_L, numeric_intertwine_residual, symbolic_intertwines
from difffield import sample_points
from errors import ChainError, HeunError
from operators import CouplingVector, compose, random_energies
from quasisolvable import SignChoice, as_sign

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DarbouxChain:
    l: CouplingVector
    signs: tuple
    targets: tuple

    @property
    def dimensions(self):
        return tuple(int(round(s.d)) for s in self.signs)

    @property
    def order(self):
        return sum(d + 1 for d in self.dimensions)

    def label(self):
        return ' -> '.join(f"({s.label()})" for s in self.signs)

    def to_dict(self):
        return {
            'l': list(self.l.l),
            'alphas': [list(s.alpha) for s in self.signs],
            'targets': [list(t.l) for t in self.targets],
            'order': self.order,
        }


def _admissible(sign):
    return sign.has_integer_dimension


def validate_chain(l, chain):
    """DarbouxChain for explicit alphas, checking each step and the return to l."""
    l = l if isinstance(l, CouplingVector) else CouplingVector(tuple(l))
    current = l.normalized()
    signs, targets = [], []
    for step, alpha in enumerate(chain, 1):
        try:
            sign = as_sign(current, alpha)
        except HeunError as e:
            raise ChainError(f"step {step}: alpha {tuple(alpha)} is not a sign choice of ({current.label()}): {e}")
        if not _admissible(sign):
            raise ChainError(f"step {step}: alpha=({sign.label()}) gives d = {sign.d:g}, not a non-negative integer")
        signs.append(sign)
        current = sign.target()
        targets.append(current)
    if not current.equivalent(l):
        raise ChainError(f"chain ends at ({current.label()}) instead of ({l.label()})")
    return DarbouxChain(l=l, signs=tuple(signs), targets=tuple(targets))


def commuting_operator_chain(l, chain, lat):
    """L_n o ... o L_1 for the chain of sign choices; odd order for closing chains."""
    if not isinstance(chain, DarbouxChain):
        chain = validate_chain(l, chain)
    if chain.order % 2 == 0:
        raise ChainError(f"chain {chain.label()} has even order {chain.order}")
    current = chain.l.normalized()
    A = None
    for sign, target in zip(chain.signs, chain.targets):
        L = closed_form_L(current, sign, lat)
        A = L if A is None else compose(L, A)
        logger.debug(f"step alpha=({sign.label()}): ({current.label()}) -> ({target.label()}), order {A.order}")
        current = target
    return A


def chain_search(l, max_steps=4):
    """All closing chains of 1..max_steps admissible steps with odd total order."""
    l = l if isinstance(l, CouplingVector) else CouplingVector(tuple(l))
    if not l.is_integer:
        raise ChainError(f"chain search needs integer couplings, got ({l.label()})")
    start = l.normalized()
    found = []

    def extend(current, signs, targets):
        if signs and current.equivalent(start):
            chain = DarbouxChain(l=l, signs=tuple(signs), targets=tuple(targets))
            if chain.order % 2 == 1:
                found.append(chain)
        if len(signs) == max_steps:
            return
        for sign in SignChoice.all_for(current):
            if _admissible(sign):
                target = sign.target()
                extend(target, signs + [sign], targets + [target])

    extend(start, [], [])
    found.sort(key=lambda c: (len(c.signs), c.order, [s.alpha for s in c.signs]))
    logger.info(f"Found {len(found)} odd closing chain(s) of length <= {max_steps} for ({l.label()})")
    return found


def commutation_certificate(A, l, lat, rng=None, energies=5, sample_count=3):
    """Symbolic [A, H] = 0 when the operator is small enough, else numeric residuals at random E."""
    l = l if isinstance(l, CouplingVector) else CouplingVector(tuple(l))
    rng = rng if rng is not None else np.random.default_rng(config.DEFAULT_SEED)
    symbolic = None
    if A.size() <= config.SYMBOLIC_SIZE_BUDGET:
        try:
            symbolic = symbolic_intertwines(A, l, l, lat)
        except HeunError as e:
            logger.warning(f"Symbolic commutator failed: {e}")
    else:
        logger.info(f"operator size {A.size()} exceeds {config.SYMBOLIC_SIZE_BUDGET}; numeric certificate only")
    residual = None
    if symbolic is not True:
        Es = random_energies(rng, energies)
        points = sample_points(lat, rng, sample_count, margin=0.15)
        residual = numeric_intertwine_residual(A, l, l, Es, lat, points)
    passed = symbolic is True or (residual is not None and residual <= config.COMMUTATOR_TOL)
    method = 'symbolic' if symbolic is True else 'numeric'
    marker = '✓' if passed else '✗'
    detail = '' if residual is None else f" residual={residual:.3e}"
    logger.info(f"{marker} [A, H^({l.label()})] = 0 by {method} check (order {A.order}){detail}")
    return {'method': method, 'symbolic': symbolic, 'numeric_residual': residual,
            'order': A.order, 'passed': passed}


def finite_gap_report(l, lat, max_steps=4, certify=1, rng=None):
    """Chains found for l and certificates for the first ``certify`` of them."""
    chains = chain_search(l, max_steps)
    rows = []
    for i, chain in enumerate(chains):
        row = chain.to_dict()
        if i < certify:
            A = commuting_operator_chain(l, chain, lat)
            row['certificate'] = commutation_certificate(A, l, lat, rng)
        rows.append(row)
    return {'l': list(CouplingVector(tuple(l)).l), 'max_steps': max_steps, 'chains': rows}
