use crate::error::{Error, Result};

/// Linear decay from `lr0` at step 0 to zero at `total_steps`.
pub fn linear_lr(step: usize, total_steps: usize, lr0: f64) -> Result<f64> {
    if total_steps == 0 || step > total_steps {
        return Err(Error::StepOutOfRange { step, total: total_steps });
    }
    Ok(lr0 * (1.0 - step as f64 / total_steps as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_points() {
        assert_eq!(linear_lr(0, 100, 1e-3).unwrap(), 1e-3);
        assert_eq!(linear_lr(100, 100, 1e-3).unwrap(), 0.0);
        assert!((linear_lr(50, 100, 1e-3).unwrap() - 5e-4).abs() < 1e-18);
        assert!((linear_lr(99, 100, 1e-3).unwrap() - 1e-5).abs() < 1e-12);
        assert!(matches!(linear_lr(101, 100, 1e-3), Err(Error::StepOutOfRange { step: 101, total: 100 })));
        assert!(linear_lr(0, 0, 1e-3).is_err());
    }
}
