"""Frozen output of tests/oracles/derived.py. Regenerate, never hand edit."""

FROZEN = {'R2_path': 18.000000000000004,
 'adaptive_prob_idle': 1.0,
 'async_step': ([-1.5, 0.0], [1, 0]),
 'c_at_minus3': [-3.0, 0.0, 3.0],
 'closed_form_shift_next': 0.10533336568034979,
 'dual_at_star': (9.0, [3.0, 3.0, 3.0]),
 'dual_at_zero': (0.0, [0.0, 3.0, 6.0]),
 'entropy_p1_cm1': (1.0, -1.0),
 'entropy_p2_c0': (0.18393972058572117, -0.18393972058572117),
 'grid_Q_zero_vs_star': (0.0, 9.0),
 'hinge_c_1_5': (0.0, 2.0),
 'hinge_c_half': (2.0, 1.0),
 'hinge_c_minus_0_2': (10.0, -2.0),
 'iid_0_3_halfwidth': 0.004347413023856831,
 'lagrangian_consensus': 9.0,
 'lagrangian_spread': -3.0,
 'log_decay_m0_m1': (0.7213475204444817, 0.30341307554227914),
 'quadratic_c_minus3': (3.0, -4.5),
 'rank_path': 2,
 'rank_triangle': 2,
 'ref_pair': (1.0, [-0.9999999999999998]),
 'ref_path': (3.0, [-2.9999999999999996, -3.000000000000001]),
 'ref_path_F': 9.0,
 'ref_star': (1.5, [0.4999999999999999, -0.5, -1.5000000000000002]),
 'ref_two_hinges': (4.0, 0.0),
 'regularized_hinge_grid': (2.0, 1.02),
 'residual_036': [-3.0, -3.0],
 'sect6_seed0': (0.14763881430543194, 5.445962010030594),
 'supergradient_at_star': [0.0, 0.0],
 'supergradient_at_zero': [-3.0, -3.0],
 'sync_step_noisy': [-1.45, -1.55],
 'sync_step_plain': [-1.5, -1.5],
 'zero_mean_halfwidth': 0.0002309401076758503,
 'zero_mean_second_moment': 0.003333333333333334}
