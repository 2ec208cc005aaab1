"""Closed chains of Darboux-Crum steps and the commuting operators they produce."""
import numpy as np
import pytest

from errors import ChainError
from finitegap import (chain_search, commutation_certificate, commuting_operator_chain,
                       finite_gap_report, validate_chain)
from operators import CouplingVector

LAME_CHAIN = [(-2, 0, 0, 0), (0, 2, -1, -1), (1, -2, 1, 0), (2, -1, -1, 0)]


class TestChainValidation:
    """Each step must be admissible and the chain must close."""

    def test_lame_chain(self):
        chain = validate_chain((2, 0, 0, 0), LAME_CHAIN)
        assert chain.dimensions == (1, 0, 0, 0)
        assert chain.order == 5
        assert chain.targets[0].l == (0.0, 1.0, 1.0, 1.0)
        assert chain.targets[-1].equivalent(CouplingVector((2, 0, 0, 0)))

    def test_open_chain(self):
        with pytest.raises(ChainError, match='instead of'):
            validate_chain((2, 0, 0, 0), LAME_CHAIN[:1])

    def test_inadmissible_step(self):
        with pytest.raises(ChainError, match='not a non-negative integer'):
            validate_chain((2, 0, 0, 0), [(3, 1, 1, 1)])

    def test_wrong_sign_choice(self):
        with pytest.raises(ChainError, match='not a sign choice'):
            validate_chain((2, 0, 0, 0), [(1, 0, 0, 0)])

    def test_to_dict(self):
        info = validate_chain((2, 0, 0, 0), LAME_CHAIN).to_dict()
        assert info['order'] == 5
        assert len(info['alphas']) == 4


class TestChainSearch:
    """Enumeration of odd closing chains."""

    def test_finds_lame_chain(self):
        chains = chain_search((2, 0, 0, 0), 4)
        target = validate_chain((2, 0, 0, 0), LAME_CHAIN)
        assert any(c.signs == target.signs for c in chains)
        assert all(c.order % 2 == 1 for c in chains)
        assert all(c.targets[-1].equivalent(CouplingVector((2, 0, 0, 0))) for c in chains)

    def test_sorted_by_length(self):
        chains = chain_search((2, 0, 0, 0), 4)
        lengths = [len(c.signs) for c in chains]
        assert lengths == sorted(lengths)

    def test_free_operator_has_first_order_chain(self, generic):
        chains = chain_search((0, 0, 0, 0), 1)
        assert len(chains) == 1
        assert chains[0].signs[0].alpha == (0.0, 0.0, 0.0, 0.0)
        assert chains[0].order == 1
        A = commuting_operator_chain((0, 0, 0, 0), chains[0], generic)
        assert A.order == 1
        assert A.is_monic()

    @pytest.mark.slow
    def test_lame_one_chain_commutes(self, generic):
        chains = chain_search((1, 0, 0, 0), 3)
        assert chains
        first = chains[0]
        assert first.order % 2 == 1
        A = commuting_operator_chain((1, 0, 0, 0), first, generic)
        cert = commutation_certificate(A, (1, 0, 0, 0), generic, np.random.default_rng(3))
        assert cert['passed'], cert

    def test_real_couplings_are_refused(self):
        with pytest.raises(ChainError):
            chain_search((0.6, 0, 0, 0), 2)


class TestCommutingOperator:
    """[A, H] = 0 for the composed chain."""

    def test_order_of_composition(self, generic):
        A = commuting_operator_chain((2, 0, 0, 0), LAME_CHAIN, generic)
        assert A.order == 5
        assert A.is_monic()

    @pytest.mark.slow
    def test_certificate(self, generic):
        A = commuting_operator_chain((2, 0, 0, 0), LAME_CHAIN, generic)
        cert = commutation_certificate(A, (2, 0, 0, 0), generic, np.random.default_rng(9))
        assert cert['passed'], cert
        assert cert['order'] == 5

    @pytest.mark.slow
    def test_report(self, lemniscatic):
        report = finite_gap_report((2, 0, 0, 0), lemniscatic, max_steps=4, certify=1,
                                   rng=np.random.default_rng(1))
        assert report['chains']
        assert report['chains'][0]['certificate']['passed']
