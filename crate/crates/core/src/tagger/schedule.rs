/// Learning rate at 0-based `step`: linear ramp from 0 over the first
/// `warmup_fraction * total_steps` steps, then linear decay to 0 at
/// `total_steps`.
pub fn lr_schedule(step: usize, total_steps: usize, base_lr: f64, warmup_fraction: f64) -> f64 {
    if total_steps == 0 {
        return base_lr;
    }
    let step = step.min(total_steps) as f64;
    let total = total_steps as f64;
    let warm = warmup_fraction.clamp(0.0, 1.0) * total;
    if step < warm {
        base_lr * step / warm
    } else if total > warm {
        base_lr * (total - step) / (total - warm)
    } else {
        base_lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_then_decay() {
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(lr_schedule(5, 100, 2.0, 0.1), 1.0));
        assert!(close(lr_schedule(10, 100, 2.0, 0.1), 2.0));
        assert!(close(lr_schedule(55, 100, 2.0, 0.1), 1.0));
        assert!(close(lr_schedule(0, 100, 2.0, 0.1), 0.0));
        assert!(close(lr_schedule(100, 100, 2.0, 0.1), 0.0));
        assert!(close(lr_schedule(0, 100, 2.0, 0.0), 2.0));
        assert!(close(lr_schedule(50, 100, 2.0, 1.0), 1.0));
    }

    #[test]
    fn peak_at_warmup_end() {
        let lrs: Vec<f64> = (0..=40).map(|s| lr_schedule(s, 40, 1.0, 0.25)).collect();
        let peak = lrs.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(peak, 1.0);
        assert_eq!(lrs[10], 1.0);
        assert!(lrs.windows(2).take(10).all(|w| w[0] < w[1]));
        assert!(lrs.windows(2).skip(10).all(|w| w[0] > w[1]));
    }
}
