//! Binary PGM/PPM dumps for inspecting weight maps, flow and OFM frames.

use std::f32::consts::PI;
use std::io::Write;

use super::{FlowField, WeightMap};
use crate::corpus::Image;
use crate::error::Result;

fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// `P5` greyscale, weights scaled to 0–255.
pub fn write_pgm(w: &mut impl Write, map: &WeightMap) -> Result<()> {
    write!(w, "P5\n{} {}\n255\n", map.width, map.height)?;
    let bytes: Vec<u8> = map.w.iter().map(|&v| to_byte(v)).collect();
    w.write_all(&bytes)?;
    Ok(())
}

/// `P6` colour image from the first three channels (grey if fewer).
pub fn write_ppm(w: &mut impl Write, img: &Image) -> Result<()> {
    write!(w, "P6\n{} {}\n255\n", img.width, img.height)?;
    let plane = img.height * img.width;
    let mut bytes = Vec::with_capacity(plane * 3);
    for i in 0..plane {
        for c in 0..3 {
            let c = c.min(img.channels - 1);
            bytes.push(to_byte(img.data[c * plane + i]));
        }
    }
    w.write_all(&bytes)?;
    Ok(())
}

/// Direction as hue, magnitude (relative to the frame maximum) as value.
pub fn flow_to_rgb(flow: &FlowField) -> Image {
    let n = flow.height * flow.width;
    let max = flow.u.iter().zip(&flow.v).map(|(u, v)| u.hypot(*v)).fold(0.0f32, f32::max);
    let mut data = vec![0.0f32; 3 * n];
    for i in 0..n {
        let (u, v) = (flow.u[i], flow.v[i]);
        let val = if max > 0.0 { u.hypot(v) / max } else { 0.0 };
        let hue = (v.atan2(u) + PI) / (2.0 * PI) * 6.0;
        let [r, g, b] = hsv_to_rgb(hue, 1.0, val);
        data[i] = r;
        data[n + i] = g;
        data[2 * n + i] = b;
    }
    Image { channels: 3, height: flow.height, width: flow.width, data }
}

/// `h` in sextants `[0, 6)`.
fn hsv_to_rgb(h: f32, s: f32, v: f32) -> [f32; 3] {
    let c = v * s;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [r + m, g + m, b + m]
}
