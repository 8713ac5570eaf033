//! The Lagrangian `I(X;Z|S) + β I(U;Z)` as a differentiable function of
//! encoder logits, with every information term computed exactly.

use ndarray::{Array1, Array2};

use crate::autodiff::{Graph, Var};
use crate::discrete::{Channel, JointSource};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Exact information terms for one encoder, in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Terms<T: Scalar = f64> {
    pub objective: T,
    pub utility: T,
    pub nu: T,
    pub ixz: T,
}

/// Constant tables of the source and the mechanism, shaped for graph use.
#[derive(Debug, Clone)]
pub(crate) struct ObjectiveData<T: Scalar> {
    px: Array2<T>,
    p_sx: Array2<T>,
    p_ux: Array2<T>,
    /// `Σ_s p(s) ln p(s)` and `Σ_u p(u) ln p(u)`.
    neg_hs: T,
    neg_hu: T,
    mech: Array2<T>,
}

fn positive_rows<T: Scalar>(joint: Array2<T>) -> (Array2<T>, Array1<T>) {
    let keep: Vec<usize> = (0..joint.nrows()).filter(|&r| joint.row(r).sum() > T::zero()).collect();
    let rows = joint.select(ndarray::Axis(0), &keep);
    let marg = rows.sum_axis(ndarray::Axis(1));
    (rows, marg)
}

impl<T: Scalar> ObjectiveData<T> {
    pub(crate) fn new(src: &JointSource<T>, mech: &Channel<T>) -> Result<Self> {
        let nx = src.card_x();
        if mech.in_card() < 1 {
            return Err(Error::DimensionMismatch("empty mechanism".into()));
        }
        let (p_sx, ps) = positive_rows(src.p_sx());
        let (p_ux, pu) = positive_rows(src.p_ux());
        let px = src.p_x().into_shape_with_order((nx, 1)).expect("column");
        Ok(Self {
            px,
            p_sx,
            p_ux,
            neg_hs: ps.iter().map(|&p| p.xlnx()).sum(),
            neg_hu: pu.iter().map(|&p| p.xlnx()).sum(),
            mech: mech.rows().clone(),
        })
    }

    pub(crate) fn zhat_card(&self) -> usize {
        self.mech.nrows()
    }

    pub(crate) fn card_x(&self) -> usize {
        self.px.nrows()
    }
}

/// `Σ P ln P` over a strictly positive table (clamped away from zero).
fn sum_plnp<T: Scalar>(g: &mut Graph<T>, p: Var) -> Result<Var> {
    let safe = g.clamp(p, T::min_positive_value(), T::max_value());
    let lp = g.log(safe)?;
    let prod = g.mul(p, lp)?;
    Ok(g.sum(prod))
}

pub(crate) struct Built {
    pub objective: Var,
    pub utility: Var,
    pub nu: Var,
    pub ixz: Var,
}

/// Records the objective for `logits` (an `|X| x |Ẑ|` node) on `g`.
pub(crate) fn build<T: Scalar>(g: &mut Graph<T>, data: &ObjectiveData<T>, logits: Var, beta: T) -> Result<Built> {
    let enc = g.softmax(logits);
    let mech = g.constant(data.mech.clone());
    let pzx = g.matmul(enc, mech)?;
    let px = g.constant(data.px.clone());
    let pxz = g.mul(pzx, px)?;

    // Σ p(x,z) ln p(z|x)
    let safe = g.clamp(pzx, T::min_positive_value(), T::max_value());
    let log_pzx = g.log(safe)?;
    let weighted = g.mul(pxz, log_pzx)?;
    let cond = g.sum(weighted);

    let pz = g.sum_rows(pxz);
    let z_term = sum_plnp(g, pz)?;
    let ixz = g.sub(cond, z_term)?;

    let p_sx = g.constant(data.p_sx.clone());
    let psz = g.matmul(p_sx, pzx)?;
    let sz_term = sum_plnp(g, psz)?;
    let nu = g.sub(cond, sz_term)?;
    let nu = g.add_scalar(nu, data.neg_hs);

    let p_ux = g.constant(data.p_ux.clone());
    let puz = g.matmul(p_ux, pzx)?;
    let uz_term = sum_plnp(g, puz)?;
    let utility = g.sub(uz_term, z_term)?;
    let utility = g.add_scalar(utility, -data.neg_hu);

    let scaled = g.scale(utility, beta);
    let objective = g.add(nu, scaled)?;
    Ok(Built { objective, utility, nu, ixz })
}

/// Objective terms and the gradient with respect to the logits.
pub fn objective_and_gradient<T: Scalar>(
    src: &JointSource<T>,
    mech: &Channel<T>,
    beta: T,
    logits: &Array2<T>,
) -> Result<(Terms<T>, Array2<T>)> {
    let data = ObjectiveData::new(src, mech)?;
    evaluate(&data, beta, logits)
}

pub(crate) fn evaluate<T: Scalar>(
    data: &ObjectiveData<T>,
    beta: T,
    logits: &Array2<T>,
) -> Result<(Terms<T>, Array2<T>)> {
    if logits.dim() != (data.card_x(), data.zhat_card()) {
        return Err(Error::DimensionMismatch(format!(
            "logits {:?} for |X| = {} and |Ẑ| = {}",
            logits.dim(),
            data.card_x(),
            data.zhat_card()
        )));
    }
    let mut g = Graph::new();
    let l = g.param(logits.clone());
    let built = build(&mut g, data, l, beta)?;
    let terms = Terms {
        objective: g.scalar_value(built.objective),
        utility: g.scalar_value(built.utility),
        nu: g.scalar_value(built.nu),
        ixz: g.scalar_value(built.ixz),
    };
    let grads = g.backward(built.objective)?;
    Ok((terms, grads.get(l)))
}
