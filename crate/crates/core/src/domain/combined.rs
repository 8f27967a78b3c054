use super::LossDomain;
use crate::error::{Error, Result};
use crate::linalg::ParamVec;

/// `Σₖ cₖ Lₖ` over borrowed member domains. Coefficients may have any sign,
/// so differences like `Lᵢ − Lⱼ` are expressible.
#[derive(Clone)]
pub struct CombinedDomain<'a> {
    terms: Vec<(f64, &'a dyn LossDomain)>,
    dim: usize,
}

impl std::fmt::Debug for CombinedDomain<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CombinedDomain")
            .field("coefficients", &self.coefficients())
            .field("dim", &self.dim)
            .finish()
    }
}

pub fn combine_domains<'a>(coeffs: &[f64], members: &[&'a dyn LossDomain]) -> Result<CombinedDomain<'a>> {
    if coeffs.is_empty() || coeffs.len() != members.len() {
        return Err(Error::arg(format!(
            "combine_domains needs equal nonzero lengths (got {} coefficients, {} members)",
            coeffs.len(),
            members.len()
        )));
    }
    if let Some(c) = coeffs.iter().find(|c| !c.is_finite()) {
        return Err(Error::arg(format!("non-finite combination coefficient {c}")));
    }
    let dim = members[0].dim();
    if let Some(k) = members.iter().position(|m| m.dim() != dim) {
        return Err(Error::arg(format!(
            "member {k} has dimension {} but member 0 has {dim}",
            members[k].dim()
        )));
    }
    Ok(CombinedDomain {
        terms: coeffs.iter().copied().zip(members.iter().copied()).collect(),
        dim,
    })
}

impl<'a> CombinedDomain<'a> {
    pub fn coefficients(&self) -> Vec<f64> {
        self.terms.iter().map(|(c, _)| *c).collect()
    }

    fn accumulate(
        &self,
        f: impl Fn(&dyn LossDomain) -> Result<ParamVec>,
    ) -> Result<ParamVec> {
        let mut acc = ParamVec::zeros(self.dim);
        for (c, d) in &self.terms {
            acc.axpy(*c, &f(*d)?);
        }
        Ok(acc)
    }
}

impl LossDomain for CombinedDomain<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn loss(&self, theta: &ParamVec) -> Result<f64> {
        let mut acc = 0.0;
        for (c, d) in &self.terms {
            acc += c * d.loss(theta)?;
        }
        Ok(acc)
    }

    fn loss_grad(&self, theta: &ParamVec) -> Result<(f64, ParamVec)> {
        let mut loss = 0.0;
        let mut grad = ParamVec::zeros(self.dim);
        for (c, d) in &self.terms {
            let (l, g) = d.loss_grad(theta)?;
            loss += c * l;
            grad.axpy(*c, &g);
        }
        Ok((loss, grad))
    }

    fn grad(&self, theta: &ParamVec) -> Result<ParamVec> {
        self.accumulate(|d| d.grad(theta))
    }

    fn supports_exact_hvp(&self) -> bool {
        self.terms.iter().all(|(_, d)| d.supports_exact_hvp())
    }

    fn hvp_exact(&self, theta: &ParamVec, v: &ParamVec) -> Result<ParamVec> {
        self.accumulate(|d| d.hvp_exact(theta, v))
    }

    fn is_quadratic(&self) -> bool {
        self.terms.iter().all(|(_, d)| d.is_quadratic())
    }
}
