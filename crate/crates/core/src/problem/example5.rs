use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::LinearizationData;
use crate::problem::objective::QuadraticReducedObjective;
use crate::problem::{constant_exosystem, Exosystem, LinearPlant, Problem};
use crate::scalar::Real;

/// Scalar plant `x' = x + u`, `y = -2x + w`, constant `w`, and reduced loss
/// `1/2 (u + w)^2` whose gradient is `g = u + w`.
pub fn scalar_example5<T: Real>(w0: T) -> Result<(LinearPlant<T>, Exosystem<T>, QuadraticReducedObjective<T>)> {
    let one = DMatrix::from_element(1, 1, T::one());
    let plant = LinearPlant::new(
        one.clone(),
        one.clone(),
        DMatrix::zeros(1, 1),
        DMatrix::from_element(1, 1, T::lit(-2.0)),
        one.clone(),
    )?;
    let exo = constant_exosystem(&[w0])?;
    let obj = QuadraticReducedObjective::new(one.clone(), one.clone(), one)?;
    Ok((plant, exo, obj))
}

pub fn example5_problem<T: Real>(w0: T) -> Result<Problem<T>> {
    let (plant, exo, obj) = scalar_example5(w0)?;
    let lin = LinearizationData::new(
        plant.a.clone(),
        plant.b.clone(),
        plant.c.clone(),
        plant.p.clone(),
        plant.q.clone(),
        exo.s.clone(),
        obj.t.clone(),
        obj.r.clone(),
    )?;
    Problem::new("example5", Arc::new(plant), exo, Arc::new(obj))?.with_exact_linearization(lin)
}

/// Steady state of the scalar plant: `h(u, w) = -u`.
pub fn example5_steady_state<T: Real>(u: &DVector<T>) -> DVector<T> {
    -u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::check_necessary_conditions;
    use crate::problem::Plant;

    #[test]
    fn gradient_vanishes_at_minus_w() {
        let p = example5_problem(0.4).unwrap();
        for w in [-1.0, 0.0, 0.3, 1.0] {
            let g = p.gradient(&DVector::from_vec(vec![-w]), &DVector::from_vec(vec![w])).unwrap();
            assert_eq!(g[0], 0.0);
        }
    }

    #[test]
    fn steady_state_is_equilibrium() {
        let (plant, _, _) = scalar_example5(0.0).unwrap();
        let u = DVector::from_vec(vec![0.8]);
        let x = example5_steady_state(&u);
        assert_eq!(plant.dynamics(&x, &u, &DVector::from_vec(vec![0.5]))[0], 0.0);
    }

    #[test]
    fn conditions_pass() {
        let r = check_necessary_conditions(&example5_problem(1.0).unwrap().linearize().unwrap()).unwrap();
        assert!(r.all_pass() && r.detectable_extended);
    }
}
