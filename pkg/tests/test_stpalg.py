import itertools
import math

import numpy as np
import pytest
import sympy

from wreathmul import flops
from wreathmul.bilinear import error_bound_prepost
from wreathmul.grouplib import WreathElement, wreath_inverse, wreath_multiply
from wreathmul.matcore import DimensionError, Matrix, NormKind, Precision, naive_multiply, naive_mu
from wreathmul.stpalg import (
    BUDGET_ENV,
    BudgetExceeded,
    assemble,
    build_config,
    default_budget,
    disassemble,
    embed,
    exponent_report,
    exponents_from_growth,
    flop_report,
    inner_mu_frobenius,
    multiply_batch,
    predicted_bound_crude,
    predicted_bound_final,
    prepost_level,
    round_up,
    sorted_tuples,
    stp_multiply,
    stp_multiply_array,
    transform,
    xi_count,
)
from wreathmul.wreathfft import FFTStats, fft_error_constant


@pytest.fixture(scope="module")
def cfg32():
    return build_config(3, 2)


@pytest.fixture(scope="module")
def cfg42():
    return build_config(4, 2)


def _rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


# ---------------------------------------------------------------- config


def test_running_example_cardinalities():
    cfg = build_config(16, 2)
    assert cfg.n == 450 and cfg.k_n == 225
    assert cfg.xi_size == 8_390_656
    assert len(cfg.xi_reps) == 8_390_656
    assert int(cfg.orbit_sizes.sum()) == 4096**2
    assert 1.5 * 2**30 < cfg.memory_estimate() < 3 * 2**30


@pytest.mark.parametrize("m, n, size_h, xi", [(4, 2, 64, 2080), (3, 2, 27, 378), (2, 3, 64, 45760)])
def test_xi_counts(m, n, size_h, xi):
    cfg = build_config(m, n)
    assert cfg.size_h == size_h
    assert cfg.xi_size == xi == math.comb(size_h + n - 1, n)
    assert len(cfg.xi_reps) == xi
    assert int(cfg.orbit_sizes.sum()) == size_h**n


@pytest.mark.parametrize("size, length", [(27, 2), (5, 3), (4, 4), (64, 2)])
def test_orbits_by_enumeration(size, length):
    # canonical form of every tuple under coordinate permutation
    orbits = {}
    for tup in itertools.product(range(size), repeat=length):
        key = tuple(sorted(tup))
        orbits[key] = orbits.get(key, 0) + 1
    reps = sorted(orbits)
    assert len(reps) == xi_count(size, length)
    assert [tuple(r) for r in sorted_tuples(size, length).tolist()] == reps


def test_orbit_sizes_by_enumeration(cfg32):
    counts = {}
    for tup in itertools.product(range(27), repeat=2):
        key = tuple(sorted(tup))
        counts[key] = counts.get(key, 0) + 1
    want = [counts[tuple(r)] for r in cfg32.xi_reps.tolist()]
    assert cfg32.orbit_sizes.tolist() == want


def test_served_orders():
    assert build_config(3, 2).n == 8
    assert build_config(4, 2).n == 18
    assert build_config(5, 2).n == 32
    assert build_config(2, 3).n == 6


def test_config_rejects():
    with pytest.raises(ValueError):
        build_config(1, 2)
    with pytest.raises(ValueError):
        build_config(4, 1)
    with pytest.raises(BudgetExceeded):
        build_config(4, 2, budget_bytes=1000)


def test_budget_from_environment(monkeypatch):
    monkeypatch.setenv(BUDGET_ENV, "12345")
    assert default_budget() == 12345
    with pytest.raises(BudgetExceeded, match=BUDGET_ENV):
        build_config(3, 2)
    monkeypatch.setenv(BUDGET_ENV, "lots")
    with pytest.raises(ValueError):
        default_budget()


# ----------------------------------------------------------------- embed


def test_embed_index_of_worked_example():
    cfg = build_config(16, 2)
    x = WreathElement.from_array([[9, 0, 0], [0, 5, 0]], (1, 0), 16)
    y = WreathElement.from_array([[0, 11, 0], [0, 0, 4]], (0, 1), 16)
    q = wreath_multiply(wreath_inverse(x), y)
    # the group law moves the rows of both h_x and h_y
    assert q.h == ((0, 11, 4), (7, 11, 0)) and q.perm.images == (1, 0)
    # row of x: X-vector (9, 5) has index 8 * 15 + 4, swap is permutation 1
    row = (8 * 15 + 4) * 2 + 1
    col = (10 * 15 + 3) * 2 + 0
    # the negative array is slot 1; digits (0, 11, 4, 7, 11, 0) in base 16
    code = int("0b47b0", 16)
    a = np.zeros((450, 450))
    a[row, col] = 1
    placed = embed(a, cfg)
    assert placed.shape == (2, 16**6)
    assert np.flatnonzero(placed.ravel()).tolist() == [16**6 + code]


def test_embed_zero(cfg42):
    assert not embed(np.zeros((18, 18)), cfg42).any()


@pytest.mark.parametrize("which", ["xy", "yz"])
def test_embed_preserves_mass(cfg42, which):
    a = np.random.default_rng(1).standard_normal((18, 18))
    placed = embed(a, cfg42, which)
    assert np.count_nonzero(placed) == 18 * 18
    assert np.sum(placed**2) == pytest.approx(np.sum(a**2), rel=1e-15)


def test_embed_matches_group_law(cfg32):
    # every entry lands at the slot and vector of x^-1 y computed with the group law
    n, m = cfg32.n, cfg32.m
    xs = [WreathElement.from_array(v, p, m) for v in _vectors(cfg32, 0) for p in cfg32.perms.tolist()]
    ys = [WreathElement.from_array(v, p, m) for v in _vectors(cfg32, 1) for p in cfg32.perms.tolist()]
    perms = [tuple(p) for p in cfg32.perms.tolist()]
    idx = cfg32.maps.embed_xy
    for r in range(n):
        for c in range(n):
            q = wreath_multiply(wreath_inverse(xs[r]), ys[c])
            slot = perms.index(q.perm.inverse().images)
            code = int("".join(str(v) for row in q.h for v in row), m)
            assert idx[r, c] == slot * cfg32.group_size + code


def _vectors(cfg, which):
    subsets = [tr[which].tolist() for tr in cfg.triples.triples]
    return [list(v) for v in itertools.product(*subsets)]


def test_embed_wrong_order(cfg32):
    with pytest.raises(DimensionError):
        embed(np.zeros((5, 5)), cfg32)


# ------------------------------------------------------- assemble / disassemble


def test_assemble_structure(cfg42):
    rng = np.random.default_rng(2)
    hat = rng.standard_normal((2, cfg42.group_size)) + 1j * rng.standard_normal((2, cfg42.group_size))
    batch = assemble(hat, cfg42)
    assert batch.shape == (2080, 2, 2)
    size_h = cfg42.size_h
    for r, (c0, c1) in enumerate(cfg42.xi_reps.tolist()):
        chi, swapped = c0 * size_h + c1, c1 * size_h + c0
        want = [[hat[0, chi], hat[1, chi]], [hat[1, swapped], hat[0, swapped]]]
        assert np.array_equal(batch[r], want)


def test_assemble_fixed_points(cfg42):
    rng = np.random.default_rng(3)
    hat = rng.standard_normal((2, cfg42.group_size))
    batch = assemble(hat, cfg42)
    fixed = cfg42.xi_reps[:, 0] == cfg42.xi_reps[:, 1]
    assert fixed.sum() == 64
    for mat in batch[fixed]:
        assert len(set(mat.ravel().tolist())) == 2
        assert mat[0, 0] == mat[1, 1] and mat[0, 1] == mat[1, 0]


@pytest.mark.parametrize("m, n", [(3, 2), (4, 2), (2, 3)])
def test_assemble_mass_bound(m, n):
    cfg = build_config(m, n)
    a = np.random.default_rng(4).standard_normal((cfg.n, cfg.n))
    hat = transform(embed(a.astype(complex), cfg), cfg)
    batch = assemble(hat, cfg)
    mass = float(np.sum(np.abs(batch) ** 2))
    assert mass <= cfg.n_perms * cfg.group_size * np.sum(a**2) * (1 + 1e-12)


@pytest.mark.parametrize("m, n", [(3, 2), (2, 3)])
def test_disassemble_inverts_assemble(m, n):
    cfg = build_config(m, n)
    rng = np.random.default_rng(5)
    hat = rng.standard_normal((cfg.n_perms, cfg.group_size))
    assert np.array_equal(disassemble(assemble(hat, cfg), cfg), hat)


def test_stabilizer_witnesses_agree(cfg42):
    # for a fixed point either witness tau reads the same value of a real product
    rng = np.random.default_rng(6)
    a = rng.standard_normal((18, 18)).astype(complex)
    b = rng.standard_normal((18, 18)).astype(complex)
    ca = assemble(transform(embed(a, cfg42, "xy"), cfg42), cfg42)
    cb = assemble(transform(embed(b, cfg42, "yz"), cfg42), cfg42)
    c = multiply_batch(ca, cb)
    fixed = c[cfg42.xi_reps[:, 0] == cfg42.xi_reps[:, 1]]
    # C[tau, sigma tau] for tau = id and tau = swap
    assert np.array_equal(fixed[:, 0, 0], fixed[:, 1, 1])
    assert np.array_equal(fixed[:, 0, 1], fixed[:, 1, 0])


def test_zero_batch(cfg32):
    z = np.zeros((cfg32.xi_size, 2, 2), dtype=complex)
    assert not multiply_batch(z, z).any()
    assert not disassemble(z, cfg32).any()


# -------------------------------------------------------------- multiply


@pytest.mark.parametrize("m, n", [(3, 2), (4, 2), (5, 2), (2, 3)])
def test_oracle_equivalence(m, n):
    cfg = build_config(m, n)
    rng = np.random.default_rng(m * 10 + n)
    for _ in range(3):
        a = Matrix(rng.integers(-8, 9, (cfg.n, cfg.n)), Precision.REFERENCE)
        b = Matrix(rng.integers(-8, 9, (cfg.n, cfg.n)), Precision.REFERENCE)
        got = stp_multiply(a, b, cfg)
        assert _rel(got.data, naive_multiply(a, b).data) <= 1e-10


def test_identity_times_a(cfg32):
    a = np.random.default_rng(7).standard_normal((8, 8))
    got = stp_multiply_array(np.eye(8), a, cfg32)
    assert _rel(got, a) <= 1e-10


def test_padding_smaller_orders(cfg42):
    rng = np.random.default_rng(8)
    for r in (1, 5, 17):
        a, b = rng.standard_normal((r, r)), rng.standard_normal((r, r))
        assert _rel(stp_multiply_array(a, b, cfg42), a @ b) <= 1e-10


def test_rejects_large_order(cfg32):
    with pytest.raises(DimensionError):
        stp_multiply_array(np.zeros((9, 9)), np.zeros((9, 9)), cfg32)


def test_batched_inputs(cfg32):
    rng = np.random.default_rng(9)
    a, b = rng.standard_normal((3, 8, 8)), rng.standard_normal((3, 8, 8))
    assert _rel(stp_multiply_array(a, b, cfg32), a @ b) <= 1e-10


def test_inner_multipliers_agree(cfg42):
    rng = np.random.default_rng(10)
    a, b = rng.standard_normal((18, 18)), rng.standard_normal((18, 18))
    naive = stp_multiply_array(a, b, cfg42, "naive")
    strassen = stp_multiply_array(a, b, cfg42, "strassen")
    assert _rel(strassen, naive) <= 1e-12


def test_recursive_inner_stp(cfg32):
    inner = build_config(2, 2)
    assert inner.n >= cfg32.n_perms
    rng = np.random.default_rng(11)
    a, b = rng.standard_normal((8, 8)), rng.standard_normal((8, 8))
    got = stp_multiply_array(a, b, cfg32, "stp", inner_config=inner)
    assert _rel(got, a @ b) <= 1e-10
    with pytest.raises(ValueError):
        stp_multiply_array(a, b, cfg32, "stp")


def test_zero_input(cfg32):
    assert not stp_multiply_array(np.zeros((8, 8)), np.ones((8, 8)), cfg32).any()


def test_working_precision_stays_working(cfg32):
    a = Matrix(np.ones((8, 8), dtype=np.float32))
    assert stp_multiply(a, a, cfg32).precision is Precision.WORKING


def test_data_movement_steps_do_no_arithmetic(cfg42):
    rng = np.random.default_rng(12)
    a, b = rng.standard_normal((18, 18)), rng.standard_normal((18, 18))
    with flops.count_flops() as counter:
        stp_multiply_array(a, b, cfg42)
    report = flop_report(counter)
    for step in ("embed", "assemble", "disassemble", "output"):
        assert report[step] == 0
    for step in ("fft", "multiply", "inverse_fft"):
        assert report[step] > 0
    assert counter.total("product") == 2080 * 8


def test_flops_follow_the_cost_formula():
    # total flops against |Xi| (N!)^3 + N! |H|^N log2 |H|^N across m
    xs, ys = [], []
    for m in (3, 4, 5, 6, 7, 8):
        cfg = build_config(m, 2)
        a = np.ones((cfg.n, cfg.n))
        with flops.count_flops() as counter:
            stp_multiply_array(a, a, cfg)
        hn = cfg.group_size
        xs.append(cfg.xi_size * 8 + 2 * hn * math.log2(hn))
        ys.append(sum(counter.total(k) for k in ("add", "mul", "product")))
    slope = np.polyfit(np.log(xs), np.log(ys), 1)[0]
    assert abs(slope - 1) <= 0.1


def test_measured_error_within_final_bound(cfg42):
    mu = inner_mu_frobenius(cfg42)
    bound = predicted_bound_final(cfg42, mu, 2.0**-24)
    rng = np.random.default_rng(13)
    for _ in range(20):
        a = rng.uniform(-1, 1, (18, 18)).astype(np.float32)
        b = rng.uniform(-1, 1, (18, 18)).astype(np.float32)
        c = stp_multiply_array(a, b, cfg42)
        err = np.linalg.norm(c - a.astype(np.float64) @ b.astype(np.float64))
        assert err <= bound * np.linalg.norm(a) * np.linalg.norm(b)


# ---------------------------------------------------------------- bounds


def test_final_bound_substitution(cfg42):
    f = fft_error_constant(4).f_bound(4096)
    assert predicted_bound_final(cfg42, 5.0) == pytest.approx(f + 2 * 2 * 64 * f + 2 * 64 * 5.0, rel=1e-15)


def test_bounds_vanish_with_zero_inputs(cfg42):
    zero = FFTStats(0.0)
    assert predicted_bound_final(cfg42, 0.0, fft=zero) == 0
    assert predicted_bound_crude(cfg42, 0.0, fft=zero) == 0


@pytest.mark.parametrize("m, n", [(3, 2), (4, 2), (5, 2), (16, 2), (2, 3), (3, 3)])
def test_crude_is_weaker(m, n):
    # bounds never allocate, so the memory guard is lifted
    cfg = build_config(m, n, budget_bytes=2**62)
    mu = inner_mu_frobenius(cfg)
    assert predicted_bound_crude(cfg, mu) > predicted_bound_final(cfg, mu)


def test_prepost_level_reproduces_crude_symbolically():
    H, N, mu, f = sympy.symbols("H N mu f", positive=True)
    nf = sympy.factorial(N)
    pre, post = sympy.sqrt(nf) * H ** (N / 2), H ** (-N / 2)
    t = H**N / nf
    f_pre, f_post = pre * f, f / H ** (N / 2)
    recursion = mu * t * post * pre**2 + 2 * f_pre * t * post + f_post * pre**2
    crude = H ** (3 * N / 2) * mu + 2 * H**N / sympy.sqrt(nf) * f + nf * H ** (N / 2) * f
    assert sympy.simplify(recursion - crude) == 0


@pytest.mark.parametrize("m, n", [(3, 2), (4, 2), (2, 3)])
def test_prepost_level_reproduces_crude_numerically(m, n):
    cfg = build_config(m, n)
    mu = inner_mu_frobenius(cfg)
    level = prepost_level(cfg, exact_t=False)
    assert error_bound_prepost([level], mu) == pytest.approx(predicted_bound_crude(cfg, mu), rel=1e-12)
    # the exact |Xi| only lowers the count of products
    exact = error_bound_prepost([prepost_level(cfg)], mu)
    assert exact >= error_bound_prepost([level], mu)


def test_inner_mu(cfg32):
    scale = 2 * math.sqrt(2)
    assert inner_mu_frobenius(cfg32) == pytest.approx(naive_mu(2, NormKind.FROBENIUS) * scale)
    assert inner_mu_frobenius(cfg32, complex_data=False) == naive_mu(2, NormKind.FROBENIUS)
    assert inner_mu_frobenius(cfg32, "strassen", complex_data=False) == 2 * 96
    with pytest.raises(ValueError):
        inner_mu_frobenius(cfg32, "other")


# ------------------------------------------------------------- exponents


def test_exponent_report_m16():
    rep = exponent_report(16)
    assert rep.runtime_exp == pytest.approx(11 / math.log2(15))
    assert abs(rep.runtime_exp - 2.8155) <= 5e-4
    assert abs(rep.frobenius_err_exp - 1.7917) <= 5e-4
    assert abs(rep.maxnorm_err_exp - 2.7917) <= 5e-4
    assert rep.quoted() == {"runtime_exp": 2.82, "frobenius_err_exp": 1.80, "maxnorm_err_exp": 2.80}


def test_exponent_sum_identity():
    for m in range(3, 30):
        rep = exponent_report(m)
        assert rep.sum_exp == pytest.approx(3 * rep.alpha / (2 * rep.beta))
        assert rep.sum_exp > 3


def test_exponents_symbolic():
    a, b = sympy.symbols("alpha beta", positive=True)
    total = (a - 1) / b + (a + 2) / (2 * b)
    assert sympy.simplify(total - 3 * a / (2 * b)) == 0
    # alpha >= 2 beta + 1 gives a sum of at least 3 + 3 / (2 beta)
    assert sympy.simplify(total.subs(a, 2 * b + 1) - (3 + sympy.Rational(3, 2) / b)) == 0


def test_exponent_degenerate():
    with pytest.raises(ValueError):
        exponent_report(2)
    with pytest.raises(ValueError):
        exponents_from_growth(3.0, 0.0)


def test_round_up():
    assert round_up(2.5313) == 2.54
    assert round_up(2.80) == 2.80
    assert round_up(1.7917) == 1.80
