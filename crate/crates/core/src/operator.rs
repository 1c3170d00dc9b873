//! Matrix-free linear operators on [`SpinorState`]s.

use num_complex::Complex64 as C64;

use crate::error::Result;
use crate::state::SpinorState;

pub trait Operator: Sync {
    /// Writes `A psi` into `out`, overwriting it. `out` must have the shape of `psi`.
    fn apply_into(&self, psi: &SpinorState, out: &mut SpinorState) -> Result<()>;

    fn apply(&self, psi: &SpinorState) -> Result<SpinorState> {
        let mut out = psi.zeros_like();
        self.apply_into(psi, &mut out)?;
        Ok(out)
    }

    /// `<psi|A|psi>`; real part only, for Hermitian operators.
    fn expectation(&self, psi: &SpinorState) -> Result<f64> {
        Ok(psi.inner(&self.apply(psi)?).re)
    }
}

impl<T: Operator + ?Sized> Operator for &T {
    fn apply_into(&self, psi: &SpinorState, out: &mut SpinorState) -> Result<()> {
        (**self).apply_into(psi, out)
    }
}

/// Adapts a closure into an [`Operator`].
pub struct FnOperator<F>(pub F);

impl<F> Operator for FnOperator<F>
where
    F: Fn(&SpinorState, &mut SpinorState) -> Result<()> + Sync,
{
    fn apply_into(&self, psi: &SpinorState, out: &mut SpinorState) -> Result<()> {
        (self.0)(psi, out)
    }
}

/// Sum of operators with real weights.
pub struct SumOperator<'a> {
    terms: Vec<(f64, &'a dyn Operator)>,
}

impl<'a> SumOperator<'a> {
    pub fn new(terms: Vec<(f64, &'a dyn Operator)>) -> Self {
        Self { terms }
    }
}

impl Operator for SumOperator<'_> {
    fn apply_into(&self, psi: &SpinorState, out: &mut SpinorState) -> Result<()> {
        out.fill_zero();
        let mut tmp = psi.zeros_like();
        for (w, op) in &self.terms {
            op.apply_into(psi, &mut tmp)?;
            out.axpy(C64::new(*w, 0.0), &tmp);
        }
        Ok(())
    }
}
