use std::f64::consts::PI;

/// Number of warmup steps: `⌈warmup_ratio · total_steps⌉`.
pub fn warmup_steps(total_steps: usize, warmup_ratio: f64) -> usize {
    ((warmup_ratio * total_steps as f64).ceil() as usize).min(total_steps)
}

/// Linear warmup from 0 to `lr`, then cosine decay to 0 at `total_steps`.
pub fn lr_at(step: usize, total_steps: usize, lr: f64, warmup_ratio: f64) -> f64 {
    let total = total_steps.max(1);
    let step = step.min(total);
    let warm = warmup_steps(total, warmup_ratio);
    if step < warm {
        return lr * step as f64 / warm as f64;
    }
    if warm == total {
        return lr;
    }
    let progress = (step - warm) as f64 / (total - warm) as f64;
    lr * 0.5 * (1.0 + (PI * progress).cos())
}
