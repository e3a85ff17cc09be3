import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import quad

import breakcoag as bc
from breakcoag.errors import ConfigError
from breakcoag.solver import _rhs


def _reference_rhs(tables, density):
    """Slow dense evaluation straight from the full pair tables; the
    production path uses packed upper-triangle arrays and must agree."""
    g = tables.grid
    N = g.cell_count
    number = density * g.widths
    R = tables.K_table * np.outer(number, number)
    Rc = 0.5 * tables.E_table * R
    Rb = 0.5 * (1.0 - tables.E_table) * R
    gain = np.zeros(N)
    np.add.at(gain, tables.coag_l1.ravel(), (Rc * tables.coag_w1).ravel())
    np.add.at(gain, tables.coag_l2.ravel(), (Rc * tables.coag_w2).ravel())
    if tables.frag_parent is not None:
        gain += (2.0 * Rb.sum(axis=1)) @ tables.frag_parent
    else:
        Q = Rb * tables.frag_w
        T = np.zeros(N + 1)
        np.add.at(T, tables.frag_top.ravel(), Q.ravel())
        gain += T @ tables.frag_prefix
        np.add.at(gain, tables.frag_pl1.ravel(), (Q * tables.frag_pw1).ravel())
        np.add.at(gain, tables.frag_pl2.ravel(), (Q * tables.frag_pw2).ravel())
    death = density * (tables.K_death @ number)
    return gain / g.widths - death


def _tables(grid, kernel=None, daughter=None, prob=None, **kw):
    return bc.build_tables(grid,
                           kernel or bc.KernelSpec.sum_product(0.0, 1.0),
                           grid.x_max,
                           daughter or bc.DaughterSpec.power_total(0.0),
                           prob or bc.ProbSpec.constant(0.5), **kw)


class TestBuildTables:
    def test_constant_kernel_table_values(self, small_grid):
        t = _tables(small_grid, kernel=bc.KernelSpec.constant(2.0))
        g = small_grid
        s = np.add.outer(g.centers, g.centers)
        inside = s < g.x_max
        assert np.all(t.K_table[inside] == 2.0)
        assert np.all(t.K_table[~inside] == 0.0)

    def test_tables_built_with_pure_coagulation(self, small_grid):
        t = _tables(small_grid, prob=bc.ProbSpec.constant(1.0))
        assert t.frag_prefix is not None   # tables exist, weights kill them

    def test_fragment_cell_oracle(self, small_grid):
        t = _tables(small_grid, daughter=bc.DaughterSpec.uniform())
        g = small_grid
        i, j = 10, 40
        s = g.centers[i] + g.centers[j]
        nums = t.cell_fragment_numbers(i, j)
        for k in (0, 5, 20):
            lo, hi = g.edges[k], min(g.edges[k + 1], s)
            oracle = quad(lambda z: 2.0 / s, lo, hi)[0] if hi > lo else 0.0
            assert_allclose(nums[k], oracle, rtol=1e-12)

    def test_uniform_half_cell_integral(self):
        # destination cell (1, 2) for a pair with x + y = 4
        spec = bc.DaughterSpec.uniform()
        val = (bc.partial_moment_integral(spec, 0.0, 2.0, 2.0, 2.0)
               - bc.partial_moment_integral(spec, 0.0, 1.0, 2.0, 2.0))
        assert_allclose(val, 0.5)

    def test_per_parent_requires_alpha_zero(self, small_grid):
        with pytest.raises(ConfigError):
            bc.build_tables(small_grid, bc.KernelSpec.sum_product(-0.25, 0.5),
                            small_grid.x_max, bc.DaughterSpec.power_each(0.0),
                            bc.ProbSpec.constant(0.5))

    def test_n_trunc_beyond_grid_rejected(self, small_grid):
        with pytest.raises(ConfigError):
            bc.build_tables(small_grid, bc.KernelSpec.additive(),
                            small_grid.x_max * 2.0,
                            bc.DaughterSpec.uniform(),
                            bc.ProbSpec.constant(0.5))


class TestApplyRhs:
    def test_zero_state_zero_rate(self, small_grid):
        t = _tables(small_grid)
        state = bc.State(grid=small_grid,
                         density=np.zeros(small_grid.cell_count))
        assert_allclose(bc.apply_rhs(t, state), 0.0)

    def test_packed_path_matches_dense_reference(self, small_grid):
        rng = np.random.default_rng(11)
        f = rng.random(small_grid.cell_count)
        for kw in ({},
                   {"kernel": bc.KernelSpec.smoluchowski()},
                   {"daughter": bc.DaughterSpec.power_total(-0.5)},
                   {"daughter": bc.DaughterSpec.power_each(0.0),
                    "kernel": bc.KernelSpec.constant(1.0)},
                   {"prob": bc.ProbSpec.constant(1.0)}):
            t = _tables(small_grid, **kw)
            assert_allclose(_rhs(t, f), _reference_rhs(t, f),
                            rtol=1e-12, atol=1e-12)

    def test_breakage_gain_dead_when_E_is_one(self, small_grid):
        rng = np.random.default_rng(3)
        f = rng.random(small_grid.cell_count)
        a = _tables(small_grid, daughter=bc.DaughterSpec.uniform(),
                    prob=bc.ProbSpec.constant(1.0))
        b = _tables(small_grid, daughter=bc.DaughterSpec.power_total(1.5),
                    prob=bc.ProbSpec.constant(1.0))
        assert_allclose(_rhs(a, f), _rhs(b, f), rtol=1e-12, atol=1e-14)

    def test_two_cell_hand_value(self):
        g = bc.make_grid(1.0, 4.0, 2)   # centers sqrt(2), 2*sqrt(2)
        t = bc.build_tables(g, bc.KernelSpec.constant(1.0), g.x_max,
                            bc.DaughterSpec.uniform(), bc.ProbSpec.constant(1.0))
        a = 0.7
        f = np.array([a, 0.0])
        # pair (0,0): rate 0.5*a^2 lands exactly at 2*sqrt(2) = c_1;
        # losses remove both partners from cell 0.
        rhs = _rhs(t, f)
        assert_allclose(rhs, [-a ** 2, a ** 2 / 2.0 / g.widths[1]],
                        rtol=1e-12)
        # discrete mass balance of the hand value
        assert_allclose(np.sum(g.centers * g.widths * rhs), 0.0, atol=1e-15)

    def test_mass_is_invariant_of_exact_rhs(self, small_grid):
        rng = np.random.default_rng(5)
        f = rng.random(small_grid.cell_count)
        for kw in ({}, {"daughter": bc.DaughterSpec.power_each(0.0),
                        "kernel": bc.KernelSpec.constant(1.0)}):
            t = _tables(small_grid, **kw)
            rate = _rhs(t, f)
            mass_rate = np.sum(small_grid.centers * small_grid.widths * rate)
            scale = np.sum(np.abs(rate) * small_grid.centers
                           * small_grid.widths)
            assert abs(mass_rate) <= 1e-13 * scale


class TestStepAndIntegrate:
    def test_zero_rhs_state_unchanged(self, small_grid):
        t = _tables(small_grid)
        state = bc.State(grid=small_grid,
                         density=np.zeros(small_grid.cell_count))
        out = bc.step(t, state, bc.StepControl(method="rk4", dt=0.1,
                                               t_end=0.1))
        assert_allclose(out.density, 0.0)

    def test_constant_kernel_number_oracle(self):
        g = bc.make_grid(1e-4, 1e3, 150)
        t = bc.build_tables(g, bc.KernelSpec.constant(1.0), g.x_max,
                            bc.DaughterSpec.uniform(), bc.ProbSpec.constant(1.0))
        ctrl = bc.StepControl(method="heun", t_end=2.0,
                              output_times=(0.0, 1.0, 2.0))
        traj = bc.integrate(t, bc.sample_initial(
            bc.InitialCondition.exponential(1.0), g), ctrl)
        m0 = traj.densities @ g.widths
        assert_allclose(m0, 2.0 / (2.0 + traj.times), rtol=1e-2)

    def test_rk4_matches_heun(self, small_grid):
        t = _tables(small_grid)
        state = bc.sample_initial(bc.InitialCondition.exponential(1.0),
                                  small_grid)
        out_t = (0.0, 0.5, 1.0)
        heun = bc.integrate(t, state, bc.StepControl(
            method="heun", t_end=1.0, output_times=out_t))
        rk4 = bc.integrate(t, state, bc.StepControl(
            method="rk4", dt=1e-3, t_end=1.0, output_times=out_t))
        assert_allclose(heun.densities[-1], rk4.densities[-1],
                        rtol=1e-4, atol=1e-10)

    def test_mass_conserved_along_heun_run(self, small_grid):
        t = _tables(small_grid)
        state = bc.sample_initial(bc.InitialCondition.exponential(1.0),
                                  small_grid)
        traj = bc.integrate(t, state, bc.StepControl(
            method="heun", t_end=1.0, output_times=(0.0, 0.5, 1.0)))
        m1 = traj.densities @ (small_grid.centers * small_grid.widths)
        assert np.max(np.abs(m1 / m1[0] - 1.0)) <= 1e-10

    def test_control_validation(self):
        with pytest.raises(ConfigError):
            bc.StepControl(method="euler")
        with pytest.raises(ConfigError):
            bc.StepControl(method="rk4")          # missing dt
        with pytest.raises(ConfigError):
            bc.StepControl(method="heun", rtol=-1.0)
        with pytest.raises(ConfigError):
            bc.StepControl(method="heun", t_end=0.0)


class TestWeakFormResidual:
    def test_mass_test_function_reproduces_drift(self, small_grid):
        t = _tables(small_grid)
        traj = bc.integrate(t, bc.sample_initial(
            bc.InitialCondition.exponential(1.0), small_grid),
            bc.StepControl(method="heun", t_end=1.0,
                           output_times=tuple(np.linspace(0, 1, 6))))
        res = bc.weak_form_residual(traj, t, ("power", 1.0))
        m1 = traj.densities @ (small_grid.centers * small_grid.widths)
        assert_allclose(res["absolute"], np.abs(np.diff(m1)), atol=1e-14)

    def test_number_functional_matches_moment_ode(self):
        g = bc.make_grid(1e-4, 1e3, 150)
        t = bc.build_tables(g, bc.KernelSpec.constant(1.0), g.x_max,
                            bc.DaughterSpec.uniform(), bc.ProbSpec.constant(1.0))
        traj = bc.integrate(t, bc.sample_initial(
            bc.InitialCondition.exponential(1.0), g),
            bc.StepControl(method="heun", t_end=1.0,
                           output_times=tuple(np.linspace(0, 1, 41))))
        res = bc.weak_form_residual(traj, t, ("power", 0.0))
        assert np.max(res["relative"]) <= 1e-3

    def test_indicator_on_zero_state(self, small_grid):
        t = _tables(small_grid)
        z = bc.State(grid=small_grid, density=np.zeros(small_grid.cell_count))
        traj = bc.integrate(t, z, bc.StepControl(
            method="heun", t_end=0.5, output_times=(0.0, 0.25, 0.5)))
        res = bc.weak_form_residual(traj, t, ("indicator", 1.0))
        assert_allclose(res["absolute"], 0.0)
        assert_allclose(res["relative"], 0.0)
