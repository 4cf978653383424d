//! 2D shape descriptors from a marching-squares contour of the mask.
//!
//! Contour vertices sit on the midpoints between pixel centres. Diagonal
//! two-pixel cells are treated as separated (two corner cuts).

use super::Plane;

pub const NAMES: &[&str] = &[
    "MeshSurface",
    "PixelSurface",
    "Perimeter",
    "PerimeterSurfaceRatio",
    "Sphericity",
    "SphericalDisproportion",
    "MaximumDiameter",
    "MajorAxisLength",
    "MinorAxisLength",
    "Elongation",
];

type Point = (f64, f64);

struct Contour {
    area: f64,
    perimeter: f64,
    vertices: Vec<Point>,
}

fn march(plane: &Plane) -> Contour {
    let (h, w) = (plane.height as isize, plane.width as isize);
    let [sy, sx] = plane.spacing;
    let inside = |y: isize, x: isize| {
        y >= 0 && x >= 0 && y < h && x < w && plane.mask[(y * w + x) as usize]
    };
    let mut c = Contour {
        area: 0.0,
        perimeter: 0.0,
        vertices: Vec::new(),
    };
    let cell = sy * sx;
    for cy in -1..h {
        for cx in -1..w {
            let corners = [
                inside(cy, cx),
                inside(cy, cx + 1),
                inside(cy + 1, cx),
                inside(cy + 1, cx + 1),
            ];
            let count = corners.iter().filter(|&&v| v).count();
            if count == 0 {
                continue;
            }
            let (fy, fx) = (cy as f64, cx as f64);
            let top = (fy * sy, (fx + 0.5) * sx);
            let bottom = ((fy + 1.0) * sy, (fx + 0.5) * sx);
            let left = ((fy + 0.5) * sy, fx * sx);
            let right = ((fy + 0.5) * sy, (fx + 1.0) * sx);
            let edges = [(top, left), (top, right), (bottom, left), (bottom, right)];
            let mut segment = |a: Point, b: Point| {
                c.perimeter += ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
                c.vertices.push(a);
                c.vertices.push(b);
            };
            match count {
                1 => {
                    let k = corners.iter().position(|&v| v).unwrap();
                    segment(edges[k].0, edges[k].1);
                    c.area += cell / 8.0;
                }
                2 if corners[0] == corners[3] => {
                    // Diagonal pair: two separate corner cuts.
                    for k in (0..4).filter(|&k| corners[k]) {
                        segment(edges[k].0, edges[k].1);
                    }
                    c.area += cell / 4.0;
                }
                2 => {
                    if corners[0] == corners[1] {
                        segment(left, right);
                    } else {
                        segment(top, bottom);
                    }
                    c.area += cell / 2.0;
                }
                3 => {
                    let k = corners.iter().position(|&v| !v).unwrap();
                    segment(edges[k].0, edges[k].1);
                    c.area += cell * 7.0 / 8.0;
                }
                _ => c.area += cell,
            }
        }
    }
    c
}

pub fn features(plane: &Plane) -> Vec<f64> {
    let contour = march(plane);
    let [sy, sx] = plane.spacing;
    let pts: Vec<Point> = plane
        .mask
        .iter()
        .enumerate()
        .filter(|m| *m.1)
        .map(|(i, _)| ((i / plane.width) as f64 * sy, (i % plane.width) as f64 * sx))
        .collect();
    let n = pts.len() as f64;
    let (my, mx) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let (mut cyy, mut cxx, mut cxy) = (0.0, 0.0, 0.0);
    for p in &pts {
        cyy += (p.0 - my).powi(2) / n;
        cxx += (p.1 - mx).powi(2) / n;
        cxy += (p.0 - my) * (p.1 - mx) / n;
    }
    let half_tr = (cyy + cxx) / 2.0;
    let disc = (((cyy - cxx) / 2.0).powi(2) + cxy * cxy).sqrt();
    let major = (half_tr + disc).max(0.0);
    let minor = (half_tr - disc).max(0.0);

    let mut diameter: f64 = 0.0;
    for (i, a) in contour.vertices.iter().enumerate() {
        for b in &contour.vertices[i + 1..] {
            diameter = diameter.max((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2));
        }
    }
    let area = contour.area;
    let perimeter = contour.perimeter;
    let sphericity = 2.0 * (std::f64::consts::PI * area).sqrt() / perimeter;
    vec![
        area,
        n * sy * sx,
        perimeter,
        perimeter / area,
        sphericity,
        1.0 / sphericity,
        diameter.sqrt(),
        4.0 * major.sqrt(),
        4.0 * minor.sqrt(),
        if major > 0.0 { (minor / major).sqrt() } else { 0.0 },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_contour() {
        // 2×2 block in a 4×4 plane.
        let mut mask = vec![false; 16];
        for i in [5, 6, 9, 10] {
            mask[i] = true;
        }
        let values = vec![0.0; 16];
        let plane = Plane { height: 4, width: 4, values: &values, mask: &mask, spacing: [1.0, 1.0] };
        let f = features(&plane);
        // Four corner cuts of 1/8, four edge cells of 1/2, one full cell.
        assert!((f[0] - 3.5).abs() < 1e-12);
        assert_eq!(f[1], 4.0);
        assert!((f[2] - (4.0 + 2.0 * std::f64::consts::SQRT_2)).abs() < 1e-12);
    }
}
