"""Shrinkage priors: kappa/psi ansatz, composition Laplacian, certificates, risk."""

import math

import numpy as np
import pytest

from kfprior.errors import DomainError
from kfprior.filter_model import FilterModel
from kfprior.geometry import (
    NumericalField,
    ParamPoint,
    PotentialField,
    ZETA2,
    kahler_potential,
    laplace_beltrami,
    metric_closed_form,
    sample_domain_points,
)
from kfprior.priors import (
    ExpNegPotentialField,
    KahlerAR2Field,
    KappaAnsatz,
    PsiAnsatz,
    ShrinkageField,
    SqrtField,
    TanakaField,
    catalog_ids,
    certify_superharmonic,
    get_prior_field,
    jeffreys_density,
    kappa_value_and_derivatives,
    laplacian_of_psi,
    prior_density,
    prior_value,
    psi_value,
    risk_improvement,
    sqrt_psi_certificate,
)

AR1 = FilterModel(poles=(0.5,))
ARMA11 = FilterModel(poles=(0.5,), roots=(0.3,))
ARFIMA11 = FilterModel(poles=(0.5,), roots=(0.3,), d=0.2)
AR2 = FilterModel(poles=(0.3, -0.4))


class TestKappaAnsatz:
    def test_potential_kind_at_origin(self):
        m = FilterModel(poles=(0.0,))
        v, g, h = kappa_value_and_derivatives(KappaAnsatz.kappa1(m), m)
        assert v == 0.0
        np.testing.assert_array_equal(g, [0.0])
        np.testing.assert_allclose(h, [[1.0]], atol=1e-15)

    def test_potential_kind_equals_potential(self):
        k = KappaAnsatz.kappa1(ARFIMA11)
        for pt in sample_domain_points(ARFIMA11, 10, 2):
            v, _, h = kappa_value_and_derivatives(k, ARFIMA11, pt)
            assert v == kahler_potential(ARFIMA11, pt)
            assert np.abs(h - metric_closed_form(ARFIMA11, pt).g).max() < 1e-10

    def test_weighted_impulse_geometric_example(self):
        # AR(1) at l = 1/2 with a_r = 2^-r: sum_r (1/8)^r = 1/7
        k = KappaAnsatz.kappa2(AR1)
        v, _, _ = kappa_value_and_derivatives(k, AR1)
        assert v == pytest.approx(1.0 / 7.0, rel=1e-14)

    def test_weighted_impulse_derivatives_match_fd(self):
        k = KappaAnsatz.kappa2(ARMA11)
        field = NumericalField(
            ARMA11, lambda c: kappa_value_and_derivatives(k, ARMA11, ParamPoint(c))[0]
        )
        for pt in sample_domain_points(ARMA11, 5, 11):
            _, g, h = kappa_value_and_derivatives(k, ARMA11, pt)
            assert np.abs(g - field.gradient(pt)).max() < 1e-6
            assert np.abs(h - field.mixed_hessian(pt)).max() < 1e-5

    def test_weighted_coords_closed_form(self):
        k = KappaAnsatz.kappa3(AR1)
        v, g, h = kappa_value_and_derivatives(k, AR1)
        assert v == pytest.approx(0.25)
        np.testing.assert_allclose(g, [0.5])
        np.testing.assert_allclose(h, [[1.0]])

    def test_u_star_defaults_dominate_domain(self):
        # every sampled point keeps tau = u* - kappa positive
        for maker in (KappaAnsatz.kappa1, KappaAnsatz.kappa2, KappaAnsatz.kappa3):
            k = maker(ARFIMA11)
            for pt in sample_domain_points(ARFIMA11, 50, 4):
                v, _, _ = kappa_value_and_derivatives(k, ARFIMA11, pt)
                assert v < k.u_star

    def test_validation(self):
        with pytest.raises(DomainError):
            KappaAnsatz(kind="bogus", u_star=1.0)
        with pytest.raises(DomainError):
            KappaAnsatz(kind="potential", u_star=0.0)
        with pytest.raises(DomainError):
            KappaAnsatz.kappa2(AR1, decay=1.0)
        with pytest.raises(DomainError):
            KappaAnsatz.kappa3(AR1, weights=(1.0, 2.0))


class TestPsiAnsatz:
    def test_profile_values(self):
        tau = ZETA2
        psi1 = PsiAnsatz(kind="power", exponent=1.0)
        assert psi1.profile(tau) == (tau, 1.0, 0.0)
        psi2 = PsiAnsatz(kind="log_power", exponent=1.0)
        v, d1, d2 = psi2.profile(tau)
        assert v == pytest.approx(math.log1p(tau), rel=1e-15)
        assert d1 == pytest.approx(1.0 / (1.0 + tau), rel=1e-14)
        assert d2 == pytest.approx(-1.0 / (1.0 + tau) ** 2, rel=1e-14)

    def test_concave_increasing_on_grid(self):
        taus = np.linspace(0.05, 5.0, 40)
        for kind in ("power", "log_power"):
            for a in (0.25, 0.5, 1.0):
                psi = PsiAnsatz(kind=kind, exponent=a)
                for tau in taus:
                    v, d1, d2 = psi.profile(float(tau))
                    assert v > 0.0
                    assert d1 > 0.0
                    assert d2 <= 0.0

    def test_power_derivatives_match_fd(self):
        psi = PsiAnsatz(kind="log_power", exponent=0.5)
        for tau in (0.3, 1.7):
            h = 1e-6
            v0, d1, d2 = psi.profile(tau)
            fd1 = (psi.profile(tau + h)[0] - psi.profile(tau - h)[0]) / (2 * h)
            assert d1 == pytest.approx(fd1, rel=1e-8)
            h = 1e-3
            fd2 = (
                psi.profile(tau + h)[0] - 2 * v0 + psi.profile(tau - h)[0]
            ) / h**2
            assert d2 == pytest.approx(fd2, rel=1e-4)

    def test_exponent_validation(self):
        with pytest.raises(DomainError):
            PsiAnsatz(kind="power", exponent=0.0)
        with pytest.raises(DomainError):
            PsiAnsatz(kind="power", exponent=1.5)
        with pytest.raises(DomainError):
            PsiAnsatz(kind="triple", exponent=0.5)

    def test_tau_must_be_positive(self):
        k = KappaAnsatz(kind="potential", u_star=0.01)
        with pytest.raises(DomainError):
            psi_value(PsiAnsatz(kind="power", exponent=1.0), k, AR1)


class TestShrinkageField:
    def test_gradient_and_hessian_match_fd(self):
        psi = PsiAnsatz(kind="log_power", exponent=0.5)
        for maker in (KappaAnsatz.kappa1, KappaAnsatz.kappa2, KappaAnsatz.kappa3):
            kappa = maker(ARMA11)
            field = ShrinkageField(psi, kappa, ARMA11)
            ref = NumericalField(ARMA11, lambda c: field.value(ParamPoint(c)))
            for pt in sample_domain_points(ARMA11, 4, 23):
                assert np.abs(field.gradient(pt) - ref.gradient(pt)).max() < 1e-6
                assert np.abs(field.mixed_hessian(pt) - ref.mixed_hessian(pt)).max() < 1e-5

    def test_laplacian_composition_identity(self):
        psi = PsiAnsatz(kind="power", exponent=0.5)
        kappa = KappaAnsatz.kappa1(ARFIMA11)
        field = ShrinkageField(psi, kappa, ARFIMA11)
        for pt in sample_domain_points(ARFIMA11, 20, 7):
            via_identity = laplacian_of_psi(psi, kappa, ARFIMA11, pt)
            metric = metric_closed_form(ARFIMA11, pt)
            via_field = laplace_beltrami(metric, field, pt)
            assert via_identity == pytest.approx(via_field, rel=1e-12)

    def test_laplacian_fd_check_passes(self):
        psi = PsiAnsatz(kind="log_power", exponent=0.25)
        kappa = KappaAnsatz.kappa3(ARMA11)
        for pt in sample_domain_points(ARMA11, 10, 19):
            laplacian_of_psi(psi, kappa, ARMA11, pt, fd_check=True)

    def test_linear_profile_gives_minus_laplacian_of_kappa(self):
        # Psi(tau) = tau has Psi' = 1, Psi'' = 0, so Delta psi = -Delta kappa = -2n
        psi = PsiAnsatz(kind="power", exponent=1.0)
        for model in (AR1, ARMA11, ARFIMA11):
            kappa = KappaAnsatz.kappa1(model)
            for pt in sample_domain_points(model, 10, 13):
                val = laplacian_of_psi(psi, kappa, model, pt)
                assert val == pytest.approx(-2.0 * model.n, rel=1e-9)


class TestSqrtField:
    def test_sqrt_of_power_is_half_exponent(self):
        kappa = KappaAnsatz.kappa1(ARMA11)
        full = SqrtField(ShrinkageField(PsiAnsatz("power", 1.0), kappa, ARMA11))
        half = ShrinkageField(PsiAnsatz("power", 0.5), kappa, ARMA11)
        for pt in sample_domain_points(ARMA11, 10, 29):
            assert full.value(pt) == pytest.approx(half.value(pt), rel=1e-14)
            assert np.abs(full.gradient(pt) - half.gradient(pt)).max() < 1e-12
            assert np.abs(full.mixed_hessian(pt) - half.mixed_hessian(pt)).max() < 1e-12

    def test_sqrt_of_nonpositive_rejected(self):
        class Neg:
            def value(self, pt):
                return -1.0

        with pytest.raises(DomainError):
            SqrtField(Neg()).value(ParamPoint(AR1.coords()))

    def test_sqrt_certificate_matches_half_exponent_certificate(self):
        kappa = KappaAnsatz.kappa1(AR1)
        base = ShrinkageField(PsiAnsatz("power", 1.0), kappa, AR1)
        direct = certify_superharmonic(
            ShrinkageField(PsiAnsatz("power", 0.5), kappa, AR1), AR1, 40, 3
        )
        via_sqrt = sqrt_psi_certificate(base, AR1, 40, 3)
        assert via_sqrt.verdict == direct.verdict == "superharmonic"
        assert via_sqrt.max_laplacian == pytest.approx(direct.max_laplacian, rel=1e-10)

    def test_sqrt_of_constant_is_indeterminate(self):
        class Const:
            def value(self, pt):
                return 4.0

            def gradient(self, pt):
                return np.zeros(1, dtype=complex)

            def mixed_hessian(self, pt):
                return np.zeros((1, 1), dtype=complex)

        report = sqrt_psi_certificate(Const(), AR1, 20, 0)
        assert report.verdict == "indeterminate"


class TestStandaloneFields:
    def test_ar2_product_value(self):
        field = KahlerAR2Field(AR2)
        l1, l2 = 0.3, -0.4
        expect = (1 - l1 * l1) * (1 - l1 * l2) * (1 - l2 * l1) * (1 - l2 * l2)
        assert field.value(ParamPoint(AR2.coords())) == pytest.approx(expect, rel=1e-14)

    def test_ar2_derivatives_match_fd(self):
        field = KahlerAR2Field(AR2)
        ref = NumericalField(AR2, lambda c: field.value(ParamPoint(c)))
        for pt in sample_domain_points(AR2, 10, 37):
            assert np.abs(field.gradient(pt) - ref.gradient(pt)).max() < 1e-7
            assert np.abs(field.mixed_hessian(pt) - ref.mixed_hessian(pt)).max() < 1e-6

    def test_ar2_requires_pure_ar2(self):
        with pytest.raises(DomainError):
            KahlerAR2Field(AR1)
        with pytest.raises(DomainError):
            KahlerAR2Field(FilterModel(poles=(0.3, -0.4), d=0.1))

    def test_ar2_certifies_superharmonic(self):
        report = certify_superharmonic(KahlerAR2Field(AR2), AR2, 100, 0)
        assert report.verdict == "superharmonic"
        assert report.max_laplacian < 0

    def test_tanaka_value_on_real_slice(self):
        field = TanakaField(FilterModel(poles=(0.5, 0.3)))
        assert field.value(ParamPoint((0.5, 0.3))) == pytest.approx(0.85, rel=1e-15)

    def test_tanaka_refuses_complex_points(self):
        field = TanakaField(AR2)
        with pytest.raises(DomainError):
            field.value(ParamPoint((0.3 + 0.2j, -0.4)))

    def test_tanaka_refuses_certification(self):
        field = TanakaField(AR2)
        with pytest.raises(DomainError):
            field.gradient(ParamPoint(AR2.coords()))
        with pytest.raises(DomainError):
            certify_superharmonic(field, AR2, 5, 0)

    def test_exp_neg_potential_value_and_fd(self):
        field = ExpNegPotentialField(ARMA11)
        pt = ParamPoint(ARMA11.coords())
        assert field.value(pt) == pytest.approx(
            math.exp(-kahler_potential(ARMA11)), rel=1e-14
        )
        ref = NumericalField(ARMA11, lambda c: field.value(ParamPoint(c)))
        for sample in sample_domain_points(ARMA11, 5, 41):
            assert np.abs(field.gradient(sample) - ref.gradient(sample)).max() < 1e-7
            assert np.abs(
                field.mixed_hessian(sample) - ref.mixed_hessian(sample)
            ).max() < 1e-6

    def test_exp_neg_potential_reports_without_asserted_sign(self):
        # exploratory control: Delta exp(-K) = 2 exp(-K) (|dK|_g^2 - n) changes
        # sign across the domain for some shapes, so only the report contract
        # is checked, not a fixed verdict
        for model in (AR1, ARMA11):
            report = certify_superharmonic(ExpNegPotentialField(model), model, 60, 1)
            assert report.verdict in ("superharmonic", "violated", "indeterminate")
            assert report.points_checked == 60
            assert report.min_laplacian <= report.max_laplacian
        ar1_report = certify_superharmonic(ExpNegPotentialField(AR1), AR1, 60, 1)
        assert ar1_report.verdict == "superharmonic"


class TestCertification:
    def test_composed_priors_superharmonic_quick(self):
        # fast spot check; the full catalog sweep lives in the acceptance suite
        for prior_id in ("psi1-a0.5/kappa1", "psi2-a1.0/kappa2", "psi1-a1.0/kappa3"):
            field = get_prior_field(prior_id, ARMA11)
            report = certify_superharmonic(field, ARMA11, 60, 5)
            assert report.verdict == "superharmonic", prior_id

    def test_potential_is_violated(self):
        report = certify_superharmonic(PotentialField(ARMA11), ARMA11, 40, 2)
        assert report.verdict == "violated"
        assert report.max_laplacian == pytest.approx(2 * ARMA11.n, rel=1e-6)

    def test_report_fields(self):
        field = get_prior_field("psi1-a1.0/kappa1", AR1)
        report = certify_superharmonic(field, AR1, 25, 9, keep_samples=True)
        assert report.points_checked == 25
        assert len(report.samples) == 25
        assert report.max_laplacian == max(report.samples)
        assert report.min_laplacian == min(report.samples)
        assert report.worst_point in sample_domain_points(AR1, 25, 9)

    def test_deterministic(self):
        field = get_prior_field("psi1-a0.5/kappa1", AR1)
        a = certify_superharmonic(field, AR1, 30, 11)
        b = certify_superharmonic(field, AR1, 30, 11)
        assert a == b


class TestJeffreys:
    def test_origin(self):
        assert jeffreys_density(FilterModel(poles=(0.0,))) == pytest.approx(1.0)

    def test_ar1_closed_form(self):
        assert jeffreys_density(AR1) == pytest.approx(4.0 / 3.0, rel=1e-14)

    def test_arfima_determinant(self):
        m = FilterModel(poles=(0.5,), d=0.2)
        expect = ZETA2 / 0.75 - (math.log(0.5) / 0.5) ** 2
        assert jeffreys_density(m) == pytest.approx(expect, rel=1e-13)

    def test_prior_value_bundle(self):
        field = get_prior_field("psi1-a1.0/kappa1", AR1)
        pv = prior_value(field, AR1)
        assert pv.jeffreys == pytest.approx(4.0 / 3.0, rel=1e-14)
        assert pv.shrinkage == pytest.approx(pv.jeffreys * pv.psi, rel=1e-15)
        assert pv.psi > 0


class TestRiskImprovement:
    def test_nonnegative_where_certified(self):
        field = get_prior_field("psi1-a1.0/kappa1", ARMA11)
        for pt in sample_domain_points(ARMA11, 50, 17):
            assert risk_improvement(field, ARMA11, pt) >= -1e-10

    def test_exact_quarter_scaling(self):
        field = get_prior_field("psi2-a0.5/kappa1", ARFIMA11)
        pt = sample_domain_points(ARFIMA11, 1, 3)[0]
        at_n = risk_improvement(field, ARFIMA11, pt, N=50)
        at_2n = risk_improvement(field, ARFIMA11, pt, N=100)
        assert at_2n == at_n / 4.0

    def test_constant_field_gives_zero(self):
        class Const:
            def value(self, pt):
                return 2.0

            def gradient(self, pt):
                return np.zeros(1, dtype=complex)

            def mixed_hessian(self, pt):
                return np.zeros((1, 1), dtype=complex)

        assert risk_improvement(Const(), AR1) == 0.0

    def test_nonpositive_psi_rejected(self):
        class Neg:
            def value(self, pt):
                return 0.0

        with pytest.raises(DomainError):
            risk_improvement(Neg(), AR1)
        with pytest.raises(DomainError):
            risk_improvement(get_prior_field("psi1-a1.0/kappa1", AR1), AR1, N=0)


class TestReducibility:
    def test_potential_kappa_matches_arma_at_d_zero(self):
        arfima = FilterModel(poles=(0.5,), roots=(0.3,), d=0.0)
        arma = FilterModel(poles=(0.5,), roots=(0.3,))
        # share u* so the two compositions are literally the same function
        k_fima = KappaAnsatz.kappa1(arfima)
        k_arma = KappaAnsatz.kappa1(arma, u_star=k_fima.u_star)
        psi = PsiAnsatz(kind="power", exponent=0.5)
        pt_fima = ParamPoint((0.0,) + tuple(arma.coords()))
        pt_arma = ParamPoint(tuple(arma.coords()))
        assert psi_value(psi, k_fima, arfima, pt_fima) == psi_value(
            psi, k_arma, arma, pt_arma
        )
        lap_fima = laplacian_of_psi(psi, k_fima, arfima, pt_fima)
        lap_arma = laplacian_of_psi(psi, k_arma, arma, pt_arma)
        # the d block of the metric still participates upstairs, so only the
        # kappa values coincide exactly; Laplacians differ by the d direction
        assert psi_value(psi, k_fima, arfima, pt_fima) > 0
        assert lap_fima < 0 and lap_arma < 0

    def test_impulse_kappa_matches_arma_at_d_zero(self):
        arfima = FilterModel(poles=(0.5,), roots=(0.3,), d=0.0)
        arma = FilterModel(poles=(0.5,), roots=(0.3,))
        k_fima = KappaAnsatz.kappa2(arfima)
        k_arma = KappaAnsatz.kappa2(arma, u_star=k_fima.u_star)
        pt_fima = ParamPoint((0.0,) + tuple(arma.coords()))
        v1, _, _ = kappa_value_and_derivatives(k_fima, arfima, pt_fima)
        v2, _, _ = kappa_value_and_derivatives(k_arma, arma)
        assert v1 == v2


class TestCatalog:
    def test_catalog_contents(self):
        ids = catalog_ids()
        # 2 baselines + 2 profiles x 3 exponents x 3 exhaustions + 3 named
        assert len(ids) == 23
        assert ids[0] == "jeffreys"
        assert ids[1] == "flat"
        assert "psi1-a0.5/kappa1" in ids
        assert "psi2-a0.25/kappa3" in ids
        assert ids[-3:] == ["kahler-ar2", "tanaka-arp", "exp-neg-potential"]

    def test_flat_and_jeffreys_have_no_psi_factor(self):
        assert get_prior_field("jeffreys", AR1) is None
        assert get_prior_field("flat", AR1) is None

    def test_unknown_id_rejected(self):
        with pytest.raises(DomainError):
            get_prior_field("psi3-a0.5/kappa1", AR1)
        with pytest.raises(DomainError):
            get_prior_field("psi1-a0.75/kappa1", AR1)
        with pytest.raises(DomainError):
            prior_density("mystery", AR1)

    def test_density_composition(self):
        assert prior_density("flat", AR1) == 1.0
        assert prior_density("jeffreys", AR1) == pytest.approx(4.0 / 3.0, rel=1e-14)
        composed = prior_density("psi1-a1.0/kappa1", AR1)
        field = get_prior_field("psi1-a1.0/kappa1", AR1)
        assert composed == pytest.approx(
            jeffreys_density(AR1) * field.value(ParamPoint(AR1.coords())), rel=1e-15
        )

    def test_every_composed_id_builds_and_evaluates(self):
        for prior_id in catalog_ids():
            if "/" not in prior_id:
                continue
            field = get_prior_field(prior_id, ARMA11)
            assert field.value(ParamPoint(ARMA11.coords())) > 0.0
