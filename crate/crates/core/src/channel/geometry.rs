//! Eigenray geometry by the image method in an iso-velocity waveguide.

use crate::error::{invalid, Result};

/// Geometry of one macro path between transmitter and receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathGeometry {
    pub length: f64,
    pub delay: f64,
    /// Depth difference between the receiver and the transmitter image.
    pub vertical: f64,
    /// Angle to the horizontal, shared by every boundary interaction.
    pub grazing_angle: f64,
    pub n_surface_bounces: u32,
    pub n_bottom_bounces: u32,
}

/// The `count` shortest eigenrays, sorted by increasing length.
///
/// Transmitter images sit at depths `2nD + z_tx` (`|n|` surface and `|n|`
/// bottom reflections) and `2nD - z_tx` (`|n| + 1` surface and `|n|` bottom
/// reflections for `n <= 0`, `n - 1` surface and `n` bottom for `n >= 1`).
pub fn trace_macro_paths(
    water_depth: f64,
    tx_depth: f64,
    rx_depth: f64,
    range: f64,
    c_water: f64,
    count: usize,
) -> Result<Vec<PathGeometry>> {
    if count == 0 {
        return Err(invalid("need at least one macro path"));
    }
    // Each image order n contributes four rays; enough orders that every
    // selected ray is shorter than anything left out.
    let orders = count as i64 / 2 + 2;
    let mut paths = Vec::with_capacity(4 * orders as usize + 2);
    let mut push = |image_depth: f64, n_surface: u32, n_bottom: u32| {
        let vertical = rx_depth - image_depth;
        let length = range.hypot(vertical);
        paths.push(PathGeometry {
            length,
            delay: length / c_water,
            vertical,
            grazing_angle: vertical.abs().atan2(range),
            n_surface_bounces: n_surface,
            n_bottom_bounces: n_bottom,
        });
    };
    for n in -orders..=orders {
        let base = 2.0 * n as f64 * water_depth;
        let k = n.unsigned_abs() as u32;
        push(base + tx_depth, k, k);
        if n <= 0 {
            push(base - tx_depth, k + 1, k);
        } else {
            push(base - tx_depth, k - 1, k);
        }
    }
    paths.sort_by(|a, b| a.length.total_cmp(&b.length));
    paths.truncate(count);
    Ok(paths)
}
