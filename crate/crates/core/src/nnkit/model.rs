use crate::error::Result;
use crate::nnkit::loss::CrossEntropy;
use crate::nnkit::tensor::{Param, Tensor};
use crate::scalar::Scalar;

/// A network exposing its parameters in a fixed order.
pub trait Parameterized<T: Scalar> {
    /// Named parameters, in the same order as [`Parameterized::params_mut`].
    fn params(&self) -> Vec<(String, &Param<T>)>;

    fn params_mut(&mut self) -> Vec<&mut Param<T>>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|(_, p)| p.value.len()).sum()
    }

    fn params_finite(&self) -> bool {
        self.params().iter().all(|(_, p)| p.value.all_finite())
    }
}

/// Image classifier over `N×1×H×W` batches.
pub trait ImageClassifier<T: Scalar>: Parameterized<T> {
    fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>>;

    /// Forward + backward of the mean cross-entropy; gradients are accumulated
    /// into the parameters, which are not updated.
    fn accumulate_gradients(&mut self, x: &Tensor<T>, labels: &[usize]) -> Result<CrossEntropy<T>>;
}
