use serde::{Deserialize, Serialize};

/// Exponents `(L, P, H)` of the twenty cubic monomials in RPC00B order.
pub const MONOMIAL_EXPONENTS: [[u8; 3]; 20] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 1, 0],
    [1, 0, 1],
    [0, 1, 1],
    [2, 0, 0],
    [0, 2, 0],
    [0, 0, 2],
    [1, 1, 1],
    [3, 0, 0],
    [1, 2, 0],
    [1, 0, 2],
    [2, 1, 0],
    [0, 3, 0],
    [0, 1, 2],
    [2, 0, 1],
    [0, 2, 1],
    [0, 0, 3],
];

/// Cubic polynomial in three normalized variables with the 20 coefficients
/// stored in RPC00B term order:
/// `1, L, P, H, LP, LH, PH, L², P², H², PLH, L³, LP², LH², L²P, P³, PH², L²H, P²H, H³`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Poly20 {
    pub c: [f64; 20],
}

impl Default for Poly20 {
    fn default() -> Self {
        Self::zero()
    }
}

impl Poly20 {
    pub const fn new(c: [f64; 20]) -> Self {
        Self { c }
    }

    pub const fn zero() -> Self {
        Self { c: [0.0; 20] }
    }

    /// The constant polynomial `1`.
    pub const fn one() -> Self {
        let mut c = [0.0; 20];
        c[0] = 1.0;
        Self { c }
    }

    /// Polynomial with a single non-zero coefficient.
    pub fn monomial(index: usize, coeff: f64) -> Self {
        let mut c = [0.0; 20];
        c[index] = coeff;
        Self { c }
    }

    /// Evaluates the polynomial at `(l, p, h)`.
    #[inline]
    pub fn eval(&self, l: f64, p: f64, h: f64) -> f64 {
        let m = monomials(l, p, h);
        let mut acc = 0.0;
        for (c, m) in self.c.iter().zip(m.iter()) {
            acc += c * m;
        }
        acc
    }

    /// Value and partial derivatives `(f, ∂f/∂l, ∂f/∂p, ∂f/∂h)`.
    pub fn eval_with_gradient(&self, l: f64, p: f64, h: f64) -> [f64; 4] {
        let c = &self.c;
        let f = self.eval(l, p, h);
        let dl = c[1]
            + c[4] * p
            + c[5] * h
            + 2.0 * c[7] * l
            + c[10] * p * h
            + 3.0 * c[11] * l * l
            + c[12] * p * p
            + c[13] * h * h
            + 2.0 * c[14] * l * p
            + 2.0 * c[17] * l * h;
        let dp = c[2]
            + c[4] * l
            + c[6] * h
            + 2.0 * c[8] * p
            + c[10] * l * h
            + 2.0 * c[12] * l * p
            + c[14] * l * l
            + 3.0 * c[15] * p * p
            + c[16] * h * h
            + 2.0 * c[18] * p * h;
        let dh = c[3]
            + c[5] * l
            + c[6] * p
            + 2.0 * c[9] * h
            + c[10] * l * p
            + 2.0 * c[13] * l * h
            + 2.0 * c[16] * p * h
            + c[17] * l * l
            + c[18] * p * p
            + 3.0 * c[19] * h * h;
        [f, dl, dp, dh]
    }
}

/// The twenty monomial values at `(l, p, h)` in RPC00B order.
#[inline]
pub fn monomials(l: f64, p: f64, h: f64) -> [f64; 20] {
    [
        1.0,
        l,
        p,
        h,
        l * p,
        l * h,
        p * h,
        l * l,
        p * p,
        h * h,
        p * l * h,
        l * l * l,
        l * p * p,
        l * h * h,
        l * l * p,
        p * p * p,
        p * h * h,
        l * l * h,
        p * p * h,
        h * h * h,
    ]
}

/// Reference evaluation of a single coefficient list, one term at a time with
/// `powi`. Independent of [`monomials`]; used to cross-check fast paths.
pub fn eval_termwise(c: &[f64; 20], l: f64, p: f64, h: f64) -> f64 {
    MONOMIAL_EXPONENTS
        .iter()
        .zip(c.iter())
        .map(|(e, c)| c * l.powi(e[0] as i32) * p.powi(e[1] as i32) * h.powi(e[2] as i32))
        .sum()
}
