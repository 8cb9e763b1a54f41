//! Fixed-size tensor helpers for domain dimensions m <= 2.
//!
//! All tensors are stored in 2x2 (or 2x2x2) arrays; only the leading m x m block
//! is meaningful and the rest stays zero.

pub type Mat2 = [[f64; 2]; 2];
pub type Tensor3 = [[[f64; 2]; 2]; 2];
pub type Tensor4 = [Tensor3; 2];

pub const ZERO2: Mat2 = [[0.0; 2]; 2];
pub const ZERO3: Tensor3 = [[[0.0; 2]; 2]; 2];

pub fn identity(m: usize) -> Mat2 {
    let mut a = ZERO2;
    for (i, row) in a.iter_mut().enumerate().take(m) {
        row[i] = 1.0;
    }
    a
}

pub fn scale(a: &Mat2, s: f64) -> Mat2 {
    let mut b = *a;
    for row in &mut b {
        for v in row {
            *v *= s;
        }
    }
    b
}

pub fn add(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = ZERO2;
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][j] + b[i][j];
        }
    }
    c
}

pub fn det(a: &Mat2, m: usize) -> f64 {
    if m == 1 {
        a[0][0]
    } else {
        a[0][0] * a[1][1] - a[0][1] * a[1][0]
    }
}

/// Inverse of a symmetric m x m matrix.
pub fn inverse(a: &Mat2, m: usize) -> Mat2 {
    let mut inv = ZERO2;
    if m == 1 {
        inv[0][0] = 1.0 / a[0][0];
    } else {
        let d = det(a, 2);
        inv[0][0] = a[1][1] / d;
        inv[1][1] = a[0][0] / d;
        inv[0][1] = -a[0][1] / d;
        inv[1][0] = -a[1][0] / d;
    }
    inv
}

/// Eigenvalues (ascending) of a symmetric m x m matrix.
pub fn sym_eigenvalues(a: &Mat2, m: usize) -> [f64; 2] {
    if m == 1 {
        return [a[0][0], a[0][0]];
    }
    let mean = 0.5 * (a[0][0] + a[1][1]);
    let half_diff = 0.5 * (a[0][0] - a[1][1]);
    let r = (half_diff * half_diff + a[0][1] * a[1][0]).max(0.0).sqrt();
    [mean - r, mean + r]
}

/// Smallest root lambda of det(a - lambda g) = 0 for symmetric a and SPD g.
pub fn smallest_generalized_eigenvalue(a: &Mat2, g: &Mat2, m: usize) -> f64 {
    if m == 1 {
        return a[0][0] / g[0][0];
    }
    let qa = det(g, 2);
    let qb = -(a[0][0] * g[1][1] + a[1][1] * g[0][0] - 2.0 * a[0][1] * g[0][1]);
    let qc = det(a, 2);
    let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
    // numerically stable pair of roots
    let q = -0.5 * (qb + qb.signum() * disc);
    let (r1, r2) = if q != 0.0 { (q / qa, qc / q) } else { (0.0, 0.0) };
    r1.min(r2)
}

/// Contraction g^{ik} g^{jl} a_ij b_kl.
pub fn inner2(ginv: &Mat2, a: &Mat2, b: &Mat2, m: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                for l in 0..m {
                    s += ginv[i][k] * ginv[j][l] * a[i][j] * b[k][l];
                }
            }
        }
    }
    s
}

/// Contraction g^{ka} g^{ib} g^{jc} s_kij t_abc.
pub fn inner3(ginv: &Mat2, s: &Tensor3, t: &Tensor3, m: usize) -> f64 {
    let mut acc = 0.0;
    for k in 0..m {
        for i in 0..m {
            for j in 0..m {
                for a in 0..m {
                    for b in 0..m {
                        for c in 0..m {
                            acc += ginv[k][a] * ginv[i][b] * ginv[j][c] * s[k][i][j] * t[a][b][c];
                        }
                    }
                }
            }
        }
    }
    acc
}

/// Trace g^{ij} a_ij.
pub fn trace(ginv: &Mat2, a: &Mat2, m: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..m {
        for j in 0..m {
            s += ginv[i][j] * a[i][j];
        }
    }
    s
}

/// Christoffel symbols Gamma^k_ij from the metric inverse and first derivatives
/// `dg[l][i][j] = d_l g_ij`.
pub fn christoffel(ginv: &Mat2, dg: &Tensor3, m: usize) -> Tensor3 {
    let mut gamma = ZERO3;
    for k in 0..m {
        for i in 0..m {
            for j in i..m {
                let mut s = 0.0;
                for l in 0..m {
                    s += ginv[k][l] * (dg[i][j][l] + dg[j][i][l] - dg[l][i][j]);
                }
                gamma[k][i][j] = 0.5 * s;
                gamma[k][j][i] = 0.5 * s;
            }
        }
    }
    gamma
}

/// Riemann tensor R^a_{bcd} from Christoffels and their derivatives
/// `dgamma[l][k][i][j] = d_l Gamma^k_ij`, with
/// R^a_{bcd} = d_c Gamma^a_db - d_d Gamma^a_cb + Gamma^a_ce Gamma^e_db - Gamma^a_de Gamma^e_cb.
pub fn riemann(gamma: &Tensor3, dgamma: &[Tensor3; 2], m: usize) -> Tensor4 {
    let mut r: Tensor4 = [ZERO3; 2];
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                for d in 0..m {
                    let mut v = dgamma[c][a][d][b] - dgamma[d][a][c][b];
                    for e in 0..m {
                        v += gamma[a][c][e] * gamma[e][d][b] - gamma[a][d][e] * gamma[e][c][b];
                    }
                    r[a][b][c][d] = v;
                }
            }
        }
    }
    r
}

/// Ricci tensor R_bd = R^a_{bad}, symmetrised.
pub fn ricci(riem: &Tensor4, m: usize) -> Mat2 {
    let mut ric = ZERO2;
    for b in 0..m {
        for d in 0..m {
            let mut s = 0.0;
            for a in 0..m {
                s += riem[a][b][a][d];
            }
            ric[b][d] = s;
        }
    }
    if m == 2 {
        let off = 0.5 * (ric[0][1] + ric[1][0]);
        ric[0][1] = off;
        ric[1][0] = off;
    }
    ric
}

/// Full norm |Rm|_g of the (1,3) Riemann tensor, lowering the first index.
pub fn riemann_norm(riem: &Tensor4, g: &Mat2, ginv: &Mat2, m: usize) -> f64 {
    // lower: R_abcd = g_ae R^e_bcd
    let mut low: Tensor4 = [ZERO3; 2];
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                for d in 0..m {
                    let mut s = 0.0;
                    for e in 0..m {
                        s += g[a][e] * riem[e][b][c][d];
                    }
                    low[a][b][c][d] = s;
                }
            }
        }
    }
    let mut acc: f64 = 0.0;
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                for d in 0..m {
                    for p in 0..m {
                        for q in 0..m {
                            for r in 0..m {
                                for s in 0..m {
                                    acc += ginv[a][p]
                                        * ginv[b][q]
                                        * ginv[c][r]
                                        * ginv[d][s]
                                        * low[a][b][c][d]
                                        * low[p][q][r][s];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    acc.max(0.0).sqrt()
}

/// Covariant derivative nabla_k H_ij from coordinate derivatives `dh[k][i][j] = d_k H_ij`.
pub fn covariant_derivative_sym2(h: &Mat2, dh: &Tensor3, gamma: &Tensor3, m: usize) -> Tensor3 {
    let mut out = ZERO3;
    for k in 0..m {
        for i in 0..m {
            for j in 0..m {
                let mut v = dh[k][i][j];
                for l in 0..m {
                    v -= gamma[l][k][i] * h[l][j] + gamma[l][k][j] * h[i][l];
                }
                out[k][i][j] = v;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_roundtrip() {
        let g = [[2.0, 0.3], [0.3, 1.5]];
        let gi = inverse(&g, 2);
        for i in 0..2 {
            for k in 0..2 {
                let s: f64 = (0..2).map(|j| gi[i][j] * g[j][k]).sum();
                let want = if i == k { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn generalized_eigenvalue_matches_scaled_identity() {
        let g = [[2.0, 0.5], [0.5, 3.0]];
        let a = scale(&g, -1.7);
        let l = smallest_generalized_eigenvalue(&a, &g, 2);
        assert!((l + 1.7).abs() < 1e-12);
    }

    #[test]
    fn generalized_eigenvalue_diagonal() {
        let g = [[2.0, 0.0], [0.0, 4.0]];
        let a = [[1.0, 0.0], [0.0, -2.0]];
        assert!((smallest_generalized_eigenvalue(&a, &g, 2) + 0.5).abs() < 1e-14);
    }

    #[test]
    fn eigenvalues_sorted() {
        let e = sym_eigenvalues(&[[1.0, 2.0], [2.0, 1.0]], 2);
        assert!((e[0] + 1.0).abs() < 1e-14 && (e[1] - 3.0).abs() < 1e-14);
    }
}
