"""End-to-end acceptance gate.

Each test prints one PASS/FAIL line (run with ``pytest -s`` to see them all);
tolerances are fixed here and nowhere else.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest
from click.testing import CliRunner

import cpcodes.codec as codec
from cpcodes.cli import main as cli_main
from cpcodes.codec import (
    VARIANT_I,
    VARIANT_II,
    ConcentricCode,
    InitialCodeword,
    encode_cpc,
)
from cpcodes.combinatorics import Composition, enumerate_compositions, rate_point_census
from cpcodes.design import (
    DesignConfig,
    design_common_composition,
    distortion_decomposition,
    estimate_zeta_split,
    lloyd_general,
    optimal_levels_single,
    pc_distortion_exact,
    swap_improvement_test,
    swap_pair_exact,
)
from cpcodes.evaluation import (
    RDPoint,
    empirical_distortion,
    pareto_filter,
    rate_variable,
)
from cpcodes.order_stats import folded_order_stats, gaussian_order_stats
from cpcodes.wsc import (
    LATTICE_SECOND_MOMENTS,
    GainCodebook,
    optimal_rate_split,
    sizes_fixed_rate,
    sizes_variable_rate,
    snr_improvement_db,
    wsc_constants,
)

from helpers import enumerate_codebook, random_decreasing_levels

pytestmark = pytest.mark.acceptance


def _report(number, name, body):
    start = time.time()
    try:
        body()
    except BaseException:
        print(f"criterion {number:2d} [{name}]: FAIL ({time.time() - start:.1f}s)")
        raise
    print(f"criterion {number:2d} [{name}]: PASS ({time.time() - start:.1f}s)")


TABLE_I = {
    2: (2, 3, 4, 5),
    3: (3, 6, 10, 15),
    4: (5, 15, 33, 56),
    5: (7, 27, 68, 132),
    6: (11, 60, 207, 517),
    7: (14, 97, 415, 1202),
    8: (20, 186, 1038, 3888),
    9: (27, 335, 2440, 11911),
}


def test_criterion_01_rate_point_table():
    def body():
        for n, row in TABLE_I.items():
            for J, expected in zip((1, 2, 3, 4), row):
                assert rate_point_census(n, J).count == expected, (n, J)

    _report(1, "rate-point census table", body)


# fixed composition menus for the encoder oracle
_ORACLE_COMPS = {
    4: [(2, 2), (1, 3), (1, 1, 2)],
    5: [(2, 3), (1, 4), (1, 2, 2)],
    6: [(3, 3), (2, 4), (1, 2, 3)],
}


def test_criterion_02_encoder_optimality():
    def body():
        vectors_per_case = 10_000
        for n, comps in _ORACLE_COMPS.items():
            for J in (1, 2, 3):
                for variant in (VARIANT_I, VARIANT_II):
                    rng = np.random.default_rng(10_000 + 100 * n + 10 * J + variant)
                    subs = []
                    for j, parts in enumerate(comps[:J]):
                        zero_last = variant == VARIANT_II and j == 1
                        subs.append(
                            InitialCodeword(
                                Composition(parts),
                                random_decreasing_levels(rng, len(parts), variant, zero_last),
                                variant,
                            )
                        )
                    code = ConcentricCode(tuple(subs))
                    union = np.concatenate([enumerate_codebook(cw) for cw in subs])
                    assert len(union) == sum(code.sizes)
                    x = rng.standard_normal((vectors_per_case, n))
                    mismatches = 0
                    for chunk_start in range(0, vectors_per_case, 512):
                        chunk = x[chunk_start : chunk_start + 512]
                        best = np.full(len(chunk), np.inf)
                        for cb_start in range(0, len(union), 4096):
                            block = union[cb_start : cb_start + 4096]
                            d = np.sum((chunk[:, None, :] - block[None, :, :]) ** 2, axis=2)
                            best = np.minimum(best, d.min(axis=1))
                        for row, xi in enumerate(chunk):
                            _, w = encode_cpc(xi, code)
                            if float(np.sum((xi - w) ** 2)) != best[row]:
                                mismatches += 1
                    assert mismatches == 0, (n, J, variant)

    _report(2, "encoder equals brute-force search", body)


def test_criterion_03_exact_vs_empirical():
    def body():
        rng = np.random.default_rng(33)
        samples = 500_000
        for trial in range(20):
            n = int(rng.integers(2, 11))
            comps = list(enumerate_compositions(n))
            c = comps[int(rng.integers(len(comps)))]
            variant = VARIANT_I if trial % 2 == 0 else VARIANT_II
            table = (folded_order_stats if variant == VARIANT_II else gaussian_order_stats)(n)
            cw = optimal_levels_single(c, table, variant)
            measured = empirical_distortion(ConcentricCode((cw,)), samples, seed=900 + trial)
            exact = pc_distortion_exact(cw, table)
            assert abs(measured.distortion - exact) <= 3.0 * measured.stderr, (
                trial, n, c.parts, variant,
            )

    _report(3, "exact formula matches Monte Carlo", body)


def test_criterion_04_reduced_design_equivalence():
    def body():
        n = 7
        table = gaussian_order_stats(n)
        rng = np.random.default_rng(44)
        comps = [c for c in enumerate_compositions(n) if c.num_levels >= 2]
        chosen = [comps[int(i)] for i in rng.choice(len(comps), size=3, replace=False)]
        for c in chosen:
            cfg = DesignConfig(J=3, variant=VARIANT_I, sample_count=500_000,
                               rng_seed=int(rng.integers(1 << 30)))
            reduced = design_common_composition(c, cfg, table)
            general = lloyd_general([c, c, c], cfg, table)
            eval_seed = int(rng.integers(1 << 30))
            m_reduced = empirical_distortion(reduced.code, 500_000, eval_seed)
            m_general = empirical_distortion(general.code, 500_000, eval_seed)
            combined = math.hypot(m_reduced.stderr, m_general.stderr)
            assert abs(m_reduced.distortion - m_general.distortion) <= 3.0 * combined, c.parts
            # decomposition identity on every evaluation batch
            batch_rng = np.random.default_rng(eval_seed)
            for _ in range(4):
                batch = batch_rng.standard_normal((125_000, n))
                for code in (reduced.code, general.code):
                    direct, decomposed = distortion_decomposition(code, batch)
                    assert abs(direct - decomposed) <= 1e-9 * abs(direct)

    _report(4, "reduced-dimension design equivalence", body)


def test_criterion_05_multisphere_beats_single_sphere():
    def body():
        n = 7
        samples = 500_000
        table = gaussian_order_stats(n)
        pc_points = []
        for c in enumerate_compositions(n):
            cw = optimal_levels_single(c, table, VARIANT_I)
            pc_points.append((math.log2(cw.size) / n, pc_distortion_exact(cw, table)))
        cpc_points = []
        for i, c in enumerate(enumerate_compositions(n)):
            cfg = DesignConfig(J=3, variant=VARIANT_I, sample_count=samples, rng_seed=1000 + i)
            res = design_common_composition(c, cfg, table)
            measured = empirical_distortion(res.code, samples, seed=5000 + i)
            rate = rate_variable(res.code, measured.probs)
            cpc_points.append(
                RDPoint("cpc", n, 3, rate, measured.distortion, measured.stderr,
                        5000 + i, samples)
            )
        front = pareto_filter(cpc_points)
        passing = 0
        strictly_better = 0
        for p in front:
            candidates = [d for (r, d) in pc_points if abs(r - p.rate) < 0.02]
            if not candidates:
                continue
            best_pc = min(candidates)
            if p.distortion <= best_pc + 3.0 * p.stderr:
                passing += 1
                if p.distortion < best_pc:
                    strictly_better += 1
        assert passing >= 5, f"only {passing} matched-rate pairs pass"
        assert strictly_better >= 3, f"only {strictly_better} strictly better"

    _report(5, "three spheres beat one at matched rates", body)


def test_criterion_06_rate_allocation_identities():
    def body():
        consts = wsc_constants(25, LATTICE_SECOND_MOMENTS["lambda24"])
        rng = np.random.default_rng(66)
        for R in (1.0, 2.0, 3.0, 5.5):
            split = optimal_rate_split(R, consts)
            assert split.shape_rate + split.gain_rate == R
            d = consts.c_s * 2.0 ** (-2.0 * 25 / 24 * split.shape_rate) + consts.c_g * 2.0 ** (
                -2.0 * 25 * split.gain_rate
            )
            target = 25.0 / 24.0 ** (1.0 - 1.0 / 25.0) * consts.c_g ** (1.0 / 25.0) * (
                consts.c_s ** (1.0 - 1.0 / 25.0)
            )
            assert abs(d * 2.0 ** (2.0 * R) - target) <= 1e-9 * target
        for _ in range(25):
            J = int(rng.integers(1, 7))
            gains = np.cumsum(rng.uniform(0.5, 2.0, size=J)) + 1.0
            p = rng.dirichlet(np.ones(J))
            gc = GainCodebook(tuple(float(g) for g in gains), tuple(float(v) for v in p))
            split = optimal_rate_split(3.0, consts)
            mv = sizes_variable_rate(split, gc, 25)
            budget = float(np.asarray(gc.probs) @ np.log2(mv))
            assert abs(budget - 25.0 * split.shape_rate) <= 1e-9
            mf = sizes_fixed_rate(2.0, gc, 25)
            assert abs(mf.sum() - 2.0**50) <= 1e-9 * 2.0**50

    _report(6, "rate-allocation identities", body)


def test_criterion_07_snr_improvement():
    def body():
        # independent digamma oracle via the half-integer recurrence
        gamma = 0.5772156649015329
        psi = -gamma - 2.0 * math.log(2.0) + 2.0 + 2.0 / 3.0
        oracle = -10.0 * (1.0 - 1.0 / 5.0) * math.log10(2.0 * math.exp(psi) / 5.0)
        value = snr_improvement_db(5)
        assert abs(value - oracle) <= 1e-3
        assert abs(value - 0.7405) <= 1e-3
        assert value < 0.8
        series = [snr_improvement_db(n) for n in range(5, 51)]
        assert all(v > 0 for v in series)
        assert all(a > b for a, b in zip(series, series[1:]))
        assert all(snr_improvement_db(n) > 0 for n in range(2, 201))

    _report(7, "gain-dependent sizing SNR gain", body)


def test_criterion_08_group_swap_statistics():
    def body():
        c = Composition((3, 2))
        table = folded_order_stats(5)
        samples = 1_000_000
        zeta_plus, zeta_minus = estimate_zeta_split(c, 1, samples, seed=88)
        needed = zeta_minus / zeta_plus
        assert 0.0 < needed < 1.0
        rng = np.random.default_rng(888)
        for trial in range(10):
            lo = max(min(needed * 1.05, 0.98), 0.05)
            base = rng.uniform(0.2, 0.5, size=2)
            gaps = rng.uniform(lo, 1.0, size=2)
            levels = [(float(b + g), float(b)) for b, g in zip(base, gaps)]
            cfg = DesignConfig(J=2, variant=VARIANT_II, sample_count=samples,
                               rng_seed=7000 + trial)
            report = swap_improvement_test(levels, c, 1, cfg, table)
            assert report.constraint_satisfied, trial
            assert report.d_after <= report.d_before + 3.0 * report.stderr_diff, trial
            # construction identities, exact rational arithmetic
            for a, b in levels:
                ta, tb = swap_pair_exact(3, 2, Fraction(a), Fraction(b))
                assert ta - tb == Fraction(a) - Fraction(b)
                assert 2 * ta * ta + 3 * tb * tb == 3 * Fraction(a) ** 2 + 2 * Fraction(b) ** 2

    _report(8, "group-swap cannot hurt under the gap constraint", body)


def test_criterion_09_codec_bijectivity():
    def body():
        for n in range(1, 7):
            for comp in enumerate_compositions(n):
                K = comp.num_levels
                cases = [(VARIANT_I, tuple(float(K - i) for i in range(K)))]
                cases.append((VARIANT_II, tuple(float(K - i) for i in range(K))))
                if K > 1:
                    cases.append((VARIANT_II, tuple(float(K - 1 - i) for i in range(K))))
                for variant, levels in cases:
                    cw = InitialCodeword(comp, levels, variant)
                    seen = set()
                    for r in range(cw.size):
                        w = codec.unrank_codeword(r, cw)
                        assert codec.rank_codeword(w, cw) == r
                        seen.add(w.tobytes())
                    assert len(seen) == cw.size

    _report(9, "rank/unrank bijectivity, exhaustive", body)


def test_criterion_10_evaluation_determinism(tmp_path):
    def body():
        runner = CliRunner()
        cb = str(tmp_path / "cb.json")
        res = runner.invoke(cli_main, [
            "design", "--n", "6", "--j", "2", "--variant", "1", "--mode", "common",
            "--composition", "2,2,2", "--samples", "20000", "--seed", "11", "--out", cb,
        ])
        assert res.exit_code == 0, res.output
        outputs = {}
        for tag, threads in (("a", "1"), ("b", "1"), ("c", "8")):
            out = str(tmp_path / f"rd_{tag}.csv")
            res = runner.invoke(cli_main, [
                "eval", "--codebook", cb, "--samples", "200000", "--seed", "21",
                "--threads", threads, "--baselines", "bound", "--output", out,
            ])
            assert res.exit_code == 0, res.output
            outputs[tag] = open(out, "rb").read()
        assert outputs["a"] == outputs["b"]  # same seed, repeated run
        assert outputs["a"] == outputs["c"]  # 1 thread vs 8 threads

    _report(10, "seeded evaluation is byte-identical", body)
