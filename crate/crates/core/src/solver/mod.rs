//! Real-valued sparse logistic regression under sparsity, group-sparsity,
//! box and monotonicity constraints.

pub mod beam;
pub mod constraints;
pub mod descent;
pub mod loss;

pub use beam::{fit_continuous, fit_continuous_with, BeamOptions, DEFAULT_BEAM_WIDTH};
pub use constraints::{check_feasible, ConstraintSet, Monotone};
pub use descent::{coordinate_descent, ContinuousSolution, DescentOptions, DescentResult};
pub use loss::{gradient, logistic_loss, sigmoid};
