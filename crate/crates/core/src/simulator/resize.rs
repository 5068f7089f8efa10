use crate::jpeg::Raster;

/// Output size when the longest side is bounded by `max_dimension`; `None`
/// if no resize is needed. Rounds half up.
pub fn target_dimensions(width: usize, height: usize, max_dimension: usize) -> Option<(usize, usize)> {
    let longest = width.max(height);
    if longest <= max_dimension {
        return None;
    }
    let scale = |side: usize| ((2 * side * max_dimension + longest) / (2 * longest)).max(1);
    Some(if width >= height {
        (max_dimension, scale(height))
    } else {
        (scale(width), max_dimension)
    })
}

/// Bilinear resampling with half-pixel centers and edge clamping.
pub fn resize_bilinear(src: &Raster, width: usize, height: usize) -> Raster {
    let ch = src.channels;
    let sx = src.width as f64 / width as f64;
    let sy = src.height as f64 / height as f64;
    let mut data = Vec::with_capacity(width * height * ch);
    let coord = |d: usize, scale: f64, limit: usize| {
        let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (limit - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(limit - 1);
        (i0, i1, s - i0 as f64)
    };
    for dy in 0..height {
        let (y0, y1, fy) = coord(dy, sy, src.height);
        for dx in 0..width {
            let (x0, x1, fx) = coord(dx, sx, src.width);
            for c in 0..ch {
                let p = |x: usize, y: usize| src.data[(y * src.width + x) * ch + c] as f64;
                let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
                let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Raster {
        width,
        height,
        channels: ch,
        data,
    }
}
