import math

import numpy as np
import pytest

from srfmbench.core import AgentState, Vec2
from srfmbench.forces import (
    PsiSwitches,
    SrfmParams,
    anisotropy,
    attraction_force,
    repulsion_force,
    tiebreak_angle,
    total_force,
)


def ped(pid, pos, vel=(0.0, 0.0), goal=(10.0, 0.0), speed=1.0, radius=0.3):
    return AgentState(pid, "pedestrian", Vec2(*pos), Vec2(*vel), Vec2(*goal),
                      radius=radius, desired_speed=speed)


def robot(pos, radius=0.3):
    return AgentState(-1, "robot", Vec2(*pos), Vec2(0, 0), Vec2(*pos),
                      radius=radius, desired_speed=0.0)


class TestSrfmParams:
    def test_obstacle_defaults(self, params):
        assert params.A_o == params.A_p
        assert params.B_o == params.B_p

    def test_validation(self):
        with pytest.raises(ValueError):
            SrfmParams(A_p=-1.0)
        with pytest.raises(ValueError):
            SrfmParams(B_p=0.0)
        with pytest.raises(ValueError):
            SrfmParams(tau=0.0)
        with pytest.raises(ValueError):
            SrfmParams(lam=1.5)


class TestAnisotropy:
    def test_frontal_exactly_one(self):
        for lam in np.linspace(0.0, 1.0, 101):
            assert anisotropy(0.0, float(lam)) == 1.0

    def test_rear_exactly_lambda(self):
        for lam in np.linspace(0.0, 1.0, 101):
            assert anisotropy(math.pi, float(lam)) == float(lam)

    def test_side_value(self):
        # 0.4 + 0.6 * 0.5
        assert math.isclose(anisotropy(math.pi / 2, 0.4), 0.7, rel_tol=1e-12)

    def test_monotone_and_bounded(self):
        lam = 0.4
        phis = np.linspace(0.0, math.pi, 200)
        vals = [anisotropy(float(p), lam) for p in phis]
        assert all(a >= b - 1e-15 for a, b in zip(vals, vals[1:]))
        assert all(lam <= v <= 1.0 for v in vals)

    def test_isotropic_at_lambda_one(self):
        vals = {anisotropy(p, 1.0) for p in np.linspace(0, math.pi, 50)}
        assert vals == {1.0}


class TestAttraction:
    def test_equilibrium(self, params):
        s = ped(0, (0, 0), vel=(1.0, 0.0), goal=(10, 0), speed=1.0)
        f = attraction_force(s, params)
        assert f == Vec2(0.0, 0.0)

    def test_rest_start(self, params):
        s = ped(0, (0, 0), vel=(0.0, 0.0), goal=(10, 0), speed=1.0)
        f = attraction_force(s, params)
        assert math.isclose(f.x, 1.0 / 0.6, rel_tol=1e-12)
        assert f.y == 0.0

    def test_braking_on_goal(self, params):
        s = ped(0, (2.0, 3.0), vel=(0.4, -0.2), goal=(2.0, 3.0), speed=1.0)
        f = attraction_force(s, params)
        assert math.isclose(f.x, -0.4 / 0.6, rel_tol=1e-12)
        assert math.isclose(f.y, 0.2 / 0.6, rel_tol=1e-12)


class TestRepulsion:
    def test_contact_frontal_magnitude_is_A(self, params):
        # subject heading +x, source dead ahead at contact distance
        s = ped(0, (0, 0), vel=(1.0, 0.0))
        f = repulsion_force(s, Vec2(0.6, 0.0), 0.3, params.A_p, params.B_p,
                            params.lam, source_id=1)
        assert math.isclose(f.norm(), params.A_p, rel_tol=1e-12)
        assert f.x < 0  # pushes away from the source

    def test_table_values(self):
        s = ped(0, (0, 0), vel=(1.0, 0.0))
        f = repulsion_force(s, Vec2(1.59, 0.0), 0.3, 7.93, 0.99, 0.4,
                            source_id=1)
        expected = 7.93 * math.exp((0.6 - 1.59) / 0.99)
        assert math.isclose(f.norm(), expected, rel_tol=1e-12)
        assert math.isclose(expected, 2.917, rel_tol=1e-3)

    def test_rear_scaling(self, params):
        ahead = repulsion_force(ped(0, (0, 0), vel=(1, 0)), Vec2(1.0, 0.0),
                                0.3, params.A_p, params.B_p, 0.4, source_id=1)
        behind = repulsion_force(ped(0, (0, 0), vel=(1, 0)), Vec2(-1.0, 0.0),
                                 0.3, params.A_p, params.B_p, 0.4, source_id=1)
        assert math.isclose(behind.norm(), 0.4 * ahead.norm(), rel_tol=1e-12)

    def test_decreasing_in_distance(self, params):
        s = ped(0, (0, 0), vel=(1, 0))
        mags = [
            repulsion_force(s, Vec2(x, 0.4), 0.3, params.A_p, params.B_p,
                            params.lam, source_id=1).norm()
            for x in np.linspace(0.5, 8.0, 40)
        ]
        assert all(a > b for a, b in zip(mags, mags[1:]))

    def test_linear_in_A(self, params):
        s = ped(0, (0, 0), vel=(0.3, 0.8))
        f1 = repulsion_force(s, Vec2(1.0, 0.7), 0.3, 2.0, 0.89, 0.4, source_id=1)
        f3 = repulsion_force(s, Vec2(1.0, 0.7), 0.3, 6.0, 0.89, 0.4, source_id=1)
        assert math.isclose(f3.x, 3.0 * f1.x, rel_tol=1e-12)
        assert math.isclose(f3.y, 3.0 * f1.y, rel_tol=1e-12)

    def test_overlap_tiebreak(self, params):
        s = ped(0, (1.0, 1.0), vel=(1, 0))
        f = repulsion_force(s, Vec2(1.0, 1.0), 0.3, params.A_p, params.B_p,
                            params.lam, source_id=7)
        assert math.isclose(f.norm(), params.A_p, rel_tol=1e-12)
        assert np.isfinite([f.x, f.y]).all()
        # ordered pair hashing separates the two agents of the pair
        assert tiebreak_angle(0, 7) != tiebreak_angle(7, 0)

    def test_bad_B(self, params):
        with pytest.raises(ValueError):
            repulsion_force(ped(0, (0, 0)), Vec2(1, 0), 0.3, 2.0, 0.0, 0.4)

    def test_lambda_one_isotropic(self, params):
        s_front = ped(0, (0, 0), vel=(1, 0))
        f_front = repulsion_force(s_front, Vec2(1.2, 0.0), 0.3, 2.0, 0.89, 1.0,
                                  source_id=1)
        f_rear = repulsion_force(s_front, Vec2(-1.2, 0.0), 0.3, 2.0, 0.89, 1.0,
                                 source_id=1)
        assert math.isclose(f_front.norm(), f_rear.norm(), rel_tol=1e-12)


class TestTotalForce:
    def test_equilibrium_total_zero(self, params):
        s = ped(0, (0, 0), vel=(1.0, 0.0), goal=(10, 0))
        fb = total_force(s, [s], None, [], params)
        assert fb.total == Vec2(0.0, 0.0)

    def test_flag_off_equals_robot_removed(self, params):
        s = ped(0, (0, 0), vel=(0.5, 0.2))
        others = [s, ped(1, (1.5, 0.5)), ped(2, (-0.5, 2.0))]
        r = robot((1.0, -1.0))
        off = total_force(s, others, r, [], params, robot_force_enabled=False)
        removed = total_force(s, others, None, [], params)
        assert off == removed

    def test_zero_Ar_equals_flag_off(self, params):
        s = ped(0, (0, 0), vel=(0.5, 0.2))
        others = [s, ped(1, (1.5, 0.5))]
        r = robot((1.0, -1.0))
        zero = total_force(s, others, r, [], params.with_values(A_r=0.0))
        off = total_force(s, others, r, [], params, robot_force_enabled=False)
        assert zero == off

    def test_symmetric_neighbors_cancel_laterally(self, params):
        s = ped(0, (0, 0), vel=(1.0, 0.0), goal=(10, 0))
        up = ped(1, (1.0, 0.8))
        down = ped(2, (1.0, -0.8))
        fb = total_force(s, [s, up, down], None, [], params)
        assert abs(fb.pedestrian_repulsion.y) < 1e-12
        # both sources sit ahead, so the net push points backward
        assert fb.pedestrian_repulsion.x < 0.0

    def test_cutoff(self, params):
        s = ped(0, (0, 0), vel=(1, 0))
        far = ped(1, (11.0, 0.0))
        fb = total_force(s, [s, far], None, [], params)
        assert fb.pedestrian_repulsion == Vec2(0.0, 0.0)

    def test_breakdown_sum(self, params):
        s = ped(0, (0, 0), vel=(0.3, -0.1))
        others = [s, ped(1, (0.9, 0.4))]
        obstacles = [(Vec2(-0.5, 0.5), 0.4)]
        fb = total_force(s, others, robot((0.7, -0.7)), obstacles, params)
        expected_x = ((fb.attraction.x + fb.pedestrian_repulsion.x)
                      + fb.obstacle_repulsion.x) + fb.robot_repulsion.x
        assert fb.total.x == expected_x

    def test_psi_switch_per_class(self, params):
        s = ped(0, (0, 0), vel=(1, 0))
        r = robot((-1.0, 0.0))  # behind the subject
        with_psi = total_force(s, [s], r, [], params)
        without = total_force(s, [s], r, [], params,
                              psi=PsiSwitches(robot=False))
        assert without.robot_repulsion.norm() > with_psi.robot_repulsion.norm()
