//! Published reference instances.

use crate::channel::{InterferenceChannel, UserLink};
use crate::numerics::{from_rows, identity, CMat};

/// Two-user 3×2 channel with symmetric links, `P = 10` and `R_n = I`, on which
/// the waterfilling map fails to be Lipschitz with constant `ρ(S)`.
/// Returns the channel and the two probing covariances of user 2.
pub fn lipschitz_counterexample() -> (InterferenceChannel, CMat, CMat) {
    let direct = from_rows(
        3,
        2,
        &[
            (0.5458, 0.0819),
            (-0.5449, 1.8701),
            (-2.1758, 0.7811),
            (-1.9082, 0.9013),
            (-1.0132, -1.1376),
            (-1.8198, -0.1200),
        ],
    );
    let cross = from_rows(
        3,
        2,
        &[
            (0.5865, 0.4392),
            (1.4387, -2.2133),
            (1.5959, -0.2853),
            (-1.5410, -0.2285),
            (-0.1035, 2.0967),
            (-0.3196, 1.0228),
        ],
    );
    let user = UserLink { n_t: 2, n_r: 3, power: 10.0, noise: identity(3) };
    let ch = InterferenceChannel::from_fn(vec![user.clone(), user], |r, q| {
        if r == q { direct.clone() } else { cross.clone() }
    })
    .expect("reference instance is valid");
    let q2a = from_rows(2, 2, &[(9.9175, 0.0), (-0.8946, 0.0), (-0.8946, 0.0), (0.0825, 0.0)]);
    let q2b = from_rows(2, 2, &[(8.5842, 0.0), (-1.2150, 0.0), (-1.2150, 0.0), (1.4158, 0.0)]);
    (ch, q2a, q2b)
}
