"""pmGH 稳定性：测度转移、limsup 轮廓与序列检查"""

import numpy as np
import pytest
from pydantic import ValidationError

from bip_lab.exceptions import InputError
from bip_lab.models import EmbeddedSpace, ProbMeasure, ProfileFunction
from bip_lab.services import pmgh_service, space_service


@pytest.fixture
def ambient():
    return space_service.line(9)


@pytest.fixture
def limit(ambient):
    return EmbeddedSpace(space=ambient, embedding=range(9))


@pytest.fixture
def coarse():
    """间距 2、权重 2 的子格点，嵌入偶数位置"""
    space = space_service.line(5, spacing=2.0, weights=[2.0] * 5)
    return EmbeddedSpace(space=space, embedding=(0, 2, 4, 6, 8))


class TestTransfer:
    """极限空间测度到逼近空间的转移"""

    def test_identity_embedding(self, ambient, limit):
        mu = ProbMeasure.uniform_on(ambient, [2, 3, 7])
        result = pmgh_service.pmgh_transfer(limit, limit, ambient, mu)
        np.testing.assert_allclose(result.measure.mass, mu.mass, atol=1e-9)
        assert result.distance == pytest.approx(0.0, abs=1e-9)
        assert result.bound_factor == pytest.approx(1.0)

    def test_dirac_to_sublattice(self, ambient, limit, coarse):
        result = pmgh_service.pmgh_transfer(coarse, limit, ambient, ProbMeasure.dirac(9, 4))
        np.testing.assert_allclose(result.measure.mass, [0, 0, 1, 0, 0], atol=1e-9)
        assert result.sup_density == pytest.approx(0.5)
        assert result.bound_factor == pytest.approx(0.9)
        assert result.sup_density <= result.bound_factor * result.input_sup_density

    def test_uniform_to_sublattice(self, ambient, limit, coarse):
        mu = ProbMeasure.uniform_on(ambient, range(9))
        result = pmgh_service.pmgh_transfer(coarse, limit, ambient, mu)
        np.testing.assert_allclose(result.measure.mass, 0.2, atol=1e-9)

    def test_cutoff_must_cover_support(self, ambient, limit, coarse):
        eta = np.ones(9)
        eta[4] = 0.5
        with pytest.raises(InputError):
            pmgh_service.pmgh_transfer(coarse, limit, ambient, ProbMeasure.dirac(9, 4), eta)
        with pytest.raises(InputError):
            pmgh_service.pmgh_transfer(coarse, limit, ambient, ProbMeasure.dirac(9, 4), np.ones(3))

    def test_measure_length(self, ambient, limit, coarse):
        with pytest.raises(InputError):
            pmgh_service.pmgh_transfer(coarse, limit, ambient, ProbMeasure.dirac(5, 0))

    def test_embedding_must_be_injective(self, ambient):
        with pytest.raises(ValidationError):
            EmbeddedSpace(space=space_service.line(2), embedding=(1, 1))


class TestLimsupProfile:
    """有限序列的 limsup 估计"""

    def test_tail_sups(self):
        assert pmgh_service.limsup_profile([3.0, 2.0, 2.5, 1.0]) == (1.0, 2.0)
        assert pmgh_service.limsup_profile([3.0, 2.0, 2.5, 1.0], tail=2) == (1.0, 1.5)
        assert pmgh_service.limsup_profile([1.0, 4.0]) == (4.0, 0.0)

    def test_empty(self):
        with pytest.raises(InputError):
            pmgh_service.limsup_profile([])


class TestStabilityCheck:
    """逼近序列上的 BIP 稳定性"""

    def test_refining_sequence_passes(self, ambient, limit, coarse):
        pairs = [(ProbMeasure.dirac(9, 0), ProbMeasure.dirac(9, 8))]
        profiles = [ProfileFunction.constant(2.0), ProfileFunction.constant(1.5),
                    ProfileFunction.constant(1.0)]
        report = pmgh_service.pmgh_stability_check(
            [coarse, limit, limit], profiles, limit, ambient, 2.0, pairs, levels=2)
        assert report.passed
        assert report.data["limit_profile"] == {"kind": "sampled", "K": 0.0, "samples": [[8.0, 1.0]]}
        np.testing.assert_allclose(np.array(report.data["transfer_distances"]), 0.0, atol=1e-9)
        assert report.data["limit_worst_ratio"] == pytest.approx(1.0, abs=1e-6)

    def test_limsup_above_limit_profile(self, ambient, limit, coarse):
        pairs = [(ProbMeasure.dirac(9, 0), ProbMeasure.dirac(9, 8))]
        profiles = [ProfileFunction.constant(3.0)] * 2
        report = pmgh_service.pmgh_stability_check(
            [coarse, limit], profiles, limit, ambient, 2.0, pairs,
            limit_profile=ProfileFunction.constant(1.0), levels=2)
        assert not report.passed
        assert [c.check_id for c in report.failures] == ["pmgh/limsup/0000"]

    def test_decreasing_sequence_above_limit_profile(self, ambient, limit):
        """仍在下降但始终高于 C(D) 的序列不能靠跨度通过"""
        pairs = [(ProbMeasure.dirac(9, 0), ProbMeasure.dirac(9, 8))]
        profiles = [ProfileFunction.constant(float(c)) for c in range(10, 1, -1)]
        report = pmgh_service.pmgh_stability_check(
            [limit] * len(profiles), profiles, limit, ambient, 2.0, pairs,
            limit_profile=ProfileFunction.constant(1.0), levels=2)
        assert [c.check_id for c in report.failures] == ["pmgh/limsup/0000"]
        limsup = next(c for c in report.checks if c.check_id == "pmgh/limsup/0000")
        assert limsup.lhs == pytest.approx(2.0)
        assert limsup.rhs == pytest.approx(1.0)
        assert limsup.details["spread"] == pytest.approx(8.0)

    def test_length_mismatch(self, ambient, limit):
        with pytest.raises(InputError):
            pmgh_service.pmgh_stability_check(
                [limit], [], limit, ambient, 2.0, [])
