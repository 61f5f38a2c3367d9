//! Shared test oracles.
//!
//! `dd` holds a double-double forward pass used as the finite-difference
//! reference: the loss is evaluated to roughly 32 significant digits and
//! returned relative to a reference value, so central differences at
//! h = 1e-5 are not swamped by f64 rounding of an O(1) loss.

#![allow(dead_code)]

use beatspace::nncore::{DenseLayer, Matrix};
use beatspace::vae::Model;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    const LN2: Dd = Dd {
        hi: std::f64::consts::LN_2,
        lo: 2.319_046_813_846_299_6e-17,
    };

    pub fn from(v: f64) -> Dd {
        Dd { hi: v, lo: 0.0 }
    }

    fn norm(hi: f64, lo: f64) -> Dd {
        let (hi, lo) = quick_two_sum(hi, lo);
        Dd { hi, lo }
    }

    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Dd::norm(s, e + f)
    }

    pub fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        Dd::norm(p, e + (self.hi * o.lo + self.lo * o.hi))
    }

    pub fn mul_f(self, v: f64) -> Dd {
        self.mul(Dd::from(v))
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul_f(q1));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul_f(q2));
        let q3 = r.hi / o.hi;
        Dd::norm(q1, q2).add(Dd::from(q3))
    }

    pub fn sqrt(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        let y = self.hi.sqrt();
        let yy = Dd::from(y).mul(Dd::from(y));
        let corr = self.sub(yy).hi / (2.0 * y);
        Dd::norm(y, corr)
    }

    pub fn exp(self) -> Dd {
        let k = (self.hi / std::f64::consts::LN_2).round();
        let r = self.sub(Dd::LN2.mul_f(k));
        // Taylor series; |r| <= ln2/2 so 27 terms are well past 1e-32.
        let mut term = Dd::from(1.0);
        let mut sum = Dd::from(1.0);
        for n in 1..28 {
            term = term.mul(r).div(Dd::from(n as f64));
            sum = sum.add(term);
        }
        let scale = 2f64.powi(k as i32);
        Dd {
            hi: sum.hi * scale,
            lo: sum.lo * scale,
        }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

fn dense(layer: &DenseLayer, x: &[Vec<Dd>]) -> Vec<Vec<Dd>> {
    x.iter()
        .map(|row| {
            (0..layer.out_dim())
                .map(|o| {
                    let w = layer.weights.row(o);
                    let mut acc = Dd::from(layer.bias[o]);
                    for (wi, xi) in w.iter().zip(row) {
                        acc = acc.add(xi.mul_f(*wi));
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

fn lift(m: &Matrix) -> Vec<Vec<Dd>> {
    m.iter_rows()
        .map(|r| r.iter().map(|&v| Dd::from(v)).collect())
        .collect()
}

/// Total loss in double-double. `noise` is required for the β-VAE and
/// ignored for the AE.
pub fn dd_loss(model: &Model, x: &Matrix, noise: Option<&Matrix>, beta: f64) -> Dd {
    let xs = lift(x);
    let (x_hat, kl) = match model {
        Model::Ae(ae) => {
            let h = dense(&ae.enc1, &xs);
            let c = dense(&ae.enc2, &h);
            let d = dense(&ae.dec1, &c);
            (dense(&ae.dec2, &d), Dd::ZERO)
        }
        Model::BetaVae(vae) => {
            let noise = noise.expect("β-VAE oracle needs a noise draw");
            let h = dense(&vae.enc1, &xs);
            let mu = dense(&vae.mu_head, &h);
            let lv = dense(&vae.logvar_head, &h);
            let mut kl = Dd::ZERO;
            let mut z = Vec::with_capacity(mu.len());
            for (r, (mr, lr)) in mu.iter().zip(&lv).enumerate() {
                let mut zr = Vec::with_capacity(mr.len());
                for (c, (m, l)) in mr.iter().zip(lr).enumerate() {
                    let sigma = l.mul_f(0.5).exp();
                    zr.push(m.add(sigma.mul_f(noise.get(r, c))));
                    let e = l.exp();
                    let term = m.mul(*m).add(e).sub(*l).sub(Dd::from(1.0)).mul_f(0.5);
                    kl = kl.add(term);
                }
                z.push(zr);
            }
            let kl = kl.div(Dd::from(x.rows() as f64));
            let d = dense(&vae.dec1, &z);
            (dense(&vae.dec2, &d), kl)
        }
    };
    let mut sq = Dd::ZERO;
    for (rh, rx) in x_hat.iter().zip(&xs) {
        for (a, b) in rh.iter().zip(rx) {
            let d = a.sub(*b);
            sq = sq.add(d.mul(d));
        }
    }
    let n = (x.rows() * x.cols()) as f64;
    let l_r = sq.div(Dd::from(n)).sqrt();
    l_r.add(kl.mul_f(beta))
}

/// Closure for `gradient_check`: the loss at `p` minus the loss at the
/// model's current parameters, both in double-double.
pub fn shifted_loss<'a>(
    model: &'a Model,
    x: &'a Matrix,
    noise: Option<&'a Matrix>,
    beta: f64,
) -> impl Fn(&[f64]) -> f64 + 'a {
    let reference = dd_loss(model, x, noise, beta);
    move |p: &[f64]| {
        let mut m = model.clone();
        m.set_params(p).expect("parameter count");
        dd_loss(&m, x, noise, beta).sub(reference).to_f64()
    }
}
