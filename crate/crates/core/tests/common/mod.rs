//! Dense Kronecker-product reference operators for small systems.
//!
//! Everything here is built from textbook matrices, not from the matrix-free
//! kernels: index `s * n_sys + i` corresponds to `kron(bath, system)` with
//! mode `k` on bit `k - 1` of `s`.

#![allow(dead_code)]

pub mod recipe;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spinbath::{SpinorState, C64};

pub type M = DMatrix<C64>;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn kron(a: &M, b: &M) -> M {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    M::from_fn(ra * rb, ca * cb, |r, col| a[(r / rb, col / cb)] * b[(r % rb, col % cb)])
}

pub fn eye(n: usize) -> M {
    M::identity(n, n)
}

pub fn from_rows(rows: &[&[C64]]) -> M {
    M::from_fn(rows.len(), rows[0].len(), |r, col| rows[r][col])
}

/// Two-level operators in the `(|0> = down, |1> = up)` basis.
pub fn sigma_plus() -> M {
    // sigma^dag |0> = |1>
    from_rows(&[&[c(0.0, 0.0), c(0.0, 0.0)], &[c(1.0, 0.0), c(0.0, 0.0)]])
}

pub fn number() -> M {
    from_rows(&[&[c(0.0, 0.0), c(0.0, 0.0)], &[c(0.0, 0.0), c(1.0, 0.0)]])
}

/// `(s^x, s^y, s^z)` for spin 1/2 with index 0 = down.
pub fn spin_half_down_up() -> [M; 3] {
    let sp = sigma_plus(); // s^+ = |up><down|
    let sm = sp.adjoint();
    let sx = (&sp + &sm).map(|x| x * 0.5);
    let sy = (&sp - &sm).map(|x| x * c(0.0, -0.5));
    let sz = (&sp * &sm - &sm * &sp).map(|x| x * 0.5);
    [sx, sy, sz]
}

/// Spin-1 matrices in the `(+1, 0, -1)` basis.
pub fn spin_one() -> [M; 3] {
    let r = std::f64::consts::SQRT_2;
    // S^+ |m> = sqrt(2) |m+1> for m = 0, -1
    let mut sp = M::zeros(3, 3);
    sp[(0, 1)] = c(r, 0.0);
    sp[(1, 2)] = c(r, 0.0);
    let sm = sp.adjoint();
    let sx = (&sp + &sm).map(|x| x * 0.5);
    let sy = (&sp - &sm).map(|x| x * c(0.0, -0.5));
    let sz = M::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]));
    [sx, sy, sz]
}

/// Operator `op` on 1-based mode `k` of a `K`-mode bath.
pub fn mode(k_modes: usize, k: usize, op: &M) -> M {
    let mut out = eye(1);
    for m in (1..=k_modes).rev() {
        let f = if m == k { op.clone() } else { eye(2) };
        out = kron(&out, &f);
    }
    out
}

/// `p^2/2m + m w^2 q^2/2` with the kinetic term from an explicit DFT.
pub fn grid_hamiltonian(q: &[f64], p: &[f64], mass: f64, omega: f64) -> M {
    let n = q.len();
    M::from_fn(n, n, |a, b| {
        let mut t = c(0.0, 0.0);
        for pj in p {
            t += C64::from_polar(pj * pj / (2.0 * mass), pj * (q[a] - q[b]));
        }
        t /= n as f64;
        if a == b {
            t += 0.5 * mass * omega * omega * q[a] * q[a];
        }
        t
    })
}

pub fn diag(v: &[f64]) -> M {
    M::from_diagonal(&nalgebra::DVector::from_iterator(v.len(), v.iter().map(|x| c(*x, 0.0))))
}

pub fn to_vec(psi: &SpinorState) -> nalgebra::DVector<C64> {
    nalgebra::DVector::from_column_slice(psi.amplitudes())
}

pub fn from_vec(v: &nalgebra::DVector<C64>, n_modes: usize, n_sys: usize) -> SpinorState {
    SpinorState::from_amplitudes(n_modes, n_sys, v.as_slice().to_vec()).unwrap()
}

pub fn random_state(n_modes: usize, n_sys: usize, seed: u64) -> SpinorState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amps = (0..(n_sys << n_modes)).map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
    let mut s = SpinorState::from_amplitudes(n_modes, n_sys, amps).unwrap();
    s.normalize();
    s
}

/// `|max_i (a - b)_i| / max(|b|_inf, 1)`.
pub fn rel_diff(a: &[C64], b: &[C64]) -> f64 {
    let scale = b.iter().map(|x| x.norm()).fold(1.0f64, f64::max);
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
}

/// `exp(-i H t) v` for Hermitian `H` through its eigendecomposition.
pub fn dense_propagate(h: &M, v: &nalgebra::DVector<C64>, t: f64) -> nalgebra::DVector<C64> {
    let eig = h.clone().symmetric_eigen();
    let u = &eig.eigenvectors;
    let coeff = u.adjoint() * v;
    let phased = nalgebra::DVector::from_iterator(
        coeff.len(),
        coeff.iter().zip(eig.eigenvalues.iter()).map(|(x, e)| x * C64::from_polar(1.0, -e * t)),
    );
    u * phased
}

/// `delta_ab - 3 n_a n_b`.
pub fn dipole(n: &[f64; 3]) -> [[f64; 3]; 3] {
    let mut t = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            t[a][b] = if a == b { 1.0 } else { 0.0 } - 3.0 * n[a] * n[b];
        }
    }
    t
}

pub fn unit(r: &[f64; 3]) -> (f64, [f64; 3]) {
    let d = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    (d, [r[0] / d, r[1] / d, r[2] / d])
}

use spinbath::{BathSpec, GridSystem, NvSpec};

/// Bath `sum_k eps_k n_k`.
pub fn dense_bath_modes(energies: &[f64]) -> M {
    let k = energies.len();
    let mut h = M::zeros(1 << k, 1 << k);
    for (m, e) in energies.iter().enumerate() {
        h += mode(k, m + 1, &number()).map(|x| x * *e);
    }
    h
}

pub fn dense_grid_system(grid: &GridSystem) -> M {
    grid_hamiltonian(grid.positions(), grid.momenta(), grid.mass(), grid.omega())
}

/// `H_S + H_B + q (x) sum_k d_k (sigma_k + sigma_k^dag)` with `d_k = sqrt(eta eps_k / rho_k)`.
pub fn dense_dipolar(grid: &GridSystem, bath: &BathSpec) -> M {
    let k = bath.n_modes();
    let hs = dense_grid_system(grid);
    let ns = grid.ng();
    let mut x = M::zeros(1 << k, 1 << k);
    for (m, (e, rho)) in bath.energies().iter().zip(bath.dos()).enumerate() {
        let d = (bath.eta() * e / rho).sqrt();
        let sp = sigma_plus();
        x += mode(k, m + 1, &(&sp + sp.adjoint())).map(|v| v * d);
    }
    kron(&eye(1 << k), &hs) + kron(&dense_bath_modes(bath.energies()), &eye(ns)) + kron(&x, &diag(grid.positions()))
}

/// `H_S + H_B + H_S (x) sum_{j<k} c_jk (sigma_j^dag sigma_k + h.c.)`.
pub fn dense_dephasing(grid: &GridSystem, energies: &[f64], c0: f64, sigma: f64) -> M {
    let k = energies.len();
    let hs = dense_grid_system(grid);
    let ns = grid.ng();
    let mut x = M::zeros(1 << k, 1 << k);
    for j in 0..k {
        for l in j + 1..k {
            let de = energies[j] - energies[l];
            let w = c0 / (k * (k - 1)) as f64 * (-de * de / (2.0 * sigma * sigma)).exp();
            let hop = mode(k, j + 1, &sigma_plus()) * mode(k, l + 1, &sigma_plus().adjoint());
            x += (&hop + hop.adjoint()).map(|v| v * w);
        }
    }
    kron(&eye(1 << k), &hs) + kron(&dense_bath_modes(energies), &eye(ns)) + kron(&x, &hs)
}

fn dot_tensor(t: &[[f64; 3]; 3], a: &[M; 3], b: &[M; 3]) -> M {
    let (r, c0) = kron(&a[0], &b[0]).shape();
    let mut out = M::zeros(r, c0);
    for i in 0..3 {
        for j in 0..3 {
            if t[i][j] != 0.0 {
                out += kron(&a[i], &b[j]).map(|v| v * t[i][j]);
            }
        }
    }
    out
}

/// NV bath: Zeeman plus the full (or secular) dipolar sum.
pub fn dense_nv_bath(spec: &NvSpec, secular: bool) -> M {
    let k = spec.n_modes();
    let s = spin_half_down_up();
    let mut h = M::zeros(1 << k, 1 << k);
    for m in 1..=k {
        h += mode(k, m, &s[2]).map(|v| v * spec.bath_zeeman());
    }
    for j in 0..k {
        for l in j + 1..k {
            let r = [
                spec.positions[j][0] - spec.positions[l][0],
                spec.positions[j][1] - spec.positions[l][1],
                spec.positions[j][2] - spec.positions[l][2],
            ];
            let (d, n) = unit(&r);
            let gamma = spec.dipolar * spec.g * spec.g / d.powi(3);
            let sj: Vec<M> = s.iter().map(|o| mode(k, j + 1, o)).collect();
            let sl: Vec<M> = s.iter().map(|o| mode(k, l + 1, o)).collect();
            if secular {
                h += (&sj[2] * &sl[2]).map(|v| v * gamma * (1.0 - 3.0 * n[2] * n[2]));
            } else {
                let t = dipole(&n);
                for a in 0..3 {
                    for b in 0..3 {
                        h += (&sj[a] * &sl[b]).map(|v| v * gamma * t[a][b]);
                    }
                }
            }
        }
    }
    h
}

/// Full NV model: `D S_z^2 + g0 muB B S_z` plus bath plus `sum_k gamma_k [S.s_k - 3 (S.n)(s.n)]`.
pub fn dense_nv_full(spec: &NvSpec, secular_bath: bool) -> M {
    let k = spec.n_modes();
    let big = spin_one();
    let hs = (&big[2] * &big[2]).map(|v| v * spec.zero_field) + big[2].map(|v| v * spec.nv_zeeman());
    let s = spin_half_down_up();
    let mut hsb = M::zeros(3 << k, 3 << k);
    for (m, r) in spec.positions.iter().enumerate() {
        let (d, n) = unit(r);
        let gamma = spec.dipolar * spec.g0 * spec.g / d.powi(3);
        let bath_ops: [M; 3] = [mode(k, m + 1, &s[0]), mode(k, m + 1, &s[1]), mode(k, m + 1, &s[2])];
        hsb += dot_tensor(&dipole(&n), &bath_ops, &big).map(|v| v * gamma);
    }
    kron(&eye(1 << k), &hs) + kron(&dense_nv_bath(spec, secular_bath), &eye(3)) + hsb
}

/// Pseudo-spin model: `diag(0, D - g0 muB B)` plus bath plus
/// `sum_k gamma_k (1 - 3 n_z^2) (S_z - 1/2) s^z_k` with `S_z = diag(1/2, -1/2)`.
pub fn dense_nv_reduced(spec: &NvSpec, secular_bath: bool) -> M {
    let k = spec.n_modes();
    let hs = diag(&[0.0, spec.zero_field - spec.nv_zeeman()]);
    let sz_shift = diag(&[0.0, -1.0]);
    let s = spin_half_down_up();
    let mut hsb = M::zeros(2 << k, 2 << k);
    for (m, r) in spec.positions.iter().enumerate() {
        let (d, n) = unit(r);
        let gamma = spec.dipolar * spec.g0 * spec.g / d.powi(3);
        hsb += kron(&mode(k, m + 1, &s[2]), &sz_shift).map(|v| v * gamma * (1.0 - 3.0 * n[2] * n[2]));
    }
    kron(&eye(1 << k), &hs) + kron(&dense_nv_bath(spec, secular_bath), &eye(2)) + hsb
}
