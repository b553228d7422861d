//! Uniform interior meshes on intervals and axis-aligned rectangles.
//!
//! Unknowns live on interior nodes only; the homogeneous Dirichlet value is
//! implicit. Node `(i, j)` of a rectangle is stored at flat index `i + nx * j`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Extents of the box `[0, L₁] × … × [0, L_d]` and the interior node count per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub extents: Vec<f64>,
    pub nodes: Vec<usize>,
}

impl DomainSpec {
    pub fn interval(length: f64, nodes: usize) -> Self {
        Self { extents: vec![length], nodes: vec![nodes] }
    }

    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize) -> Self {
        Self { extents: vec![lx, ly], nodes: vec![nx, ny] }
    }

    pub fn dimension(&self) -> usize {
        self.extents.len()
    }
}

/// A point on `∂D` together with the two nearest interior nodes along the inward normal.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryNode {
    pub position: Vec<f64>,
    /// Axis the outward normal is aligned with.
    pub axis: usize,
    /// `+1.0` or `-1.0`: sign of the outward normal along `axis`.
    pub outward: f64,
    /// Interior node at distance `h` from the boundary point.
    pub first: usize,
    /// Interior node at distance `2h`, absent when the axis has a single interior node.
    pub second: Option<usize>,
    pub spacing: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    extents: Vec<f64>,
    nodes: Vec<usize>,
    spacing: Vec<f64>,
    points: Vec<f64>,
    weights: Vec<f64>,
    boundary: Vec<BoundaryNode>,
}

pub fn build_grid(domain: &DomainSpec) -> Result<Grid> {
    let d = domain.dimension();
    if !(1..=2).contains(&d) {
        return Err(Error::Config(format!("dimension must be 1 or 2, got {d}")));
    }
    if domain.nodes.len() != d {
        return Err(Error::Config(format!(
            "expected {d} interior node counts, got {}",
            domain.nodes.len()
        )));
    }
    if domain.nodes.contains(&0) {
        return Err(Error::Config("empty interior: every axis needs N >= 1".into()));
    }
    if domain.extents.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
        return Err(Error::Config("extents must be finite and > 0".into()));
    }

    let spacing: Vec<f64> = domain
        .extents
        .iter()
        .zip(&domain.nodes)
        .map(|(&l, &n)| l / (n as f64 + 1.0))
        .collect();

    let (nx, ny) = (domain.nodes[0], if d == 2 { domain.nodes[1] } else { 1 });
    let n = nx * ny;
    let mut points = Vec::with_capacity(n * d);
    for j in 0..ny {
        for i in 0..nx {
            points.push((i + 1) as f64 * spacing[0]);
            if d == 2 {
                points.push((j + 1) as f64 * spacing[1]);
            }
        }
    }
    // Trapezoid weights with the (zero) boundary values dropped.
    let cell: f64 = spacing.iter().product();
    let weights = vec![cell; n];

    let mut boundary = Vec::new();
    let second_x = |i: usize| if nx > 1 { Some(i) } else { None };
    if d == 1 {
        let h = spacing[0];
        boundary.push(BoundaryNode {
            position: vec![0.0],
            axis: 0,
            outward: -1.0,
            first: 0,
            second: second_x(1),
            spacing: h,
        });
        boundary.push(BoundaryNode {
            position: vec![domain.extents[0]],
            axis: 0,
            outward: 1.0,
            first: nx - 1,
            second: if nx > 1 { Some(nx - 2) } else { None },
            spacing: h,
        });
    } else {
        let (lx, ly) = (domain.extents[0], domain.extents[1]);
        let (hx, hy) = (spacing[0], spacing[1]);
        let idx = |i: usize, j: usize| i + nx * j;
        // Faces x = 0 and x = Lx. Corners carry no unique normal and are omitted.
        for j in 0..ny {
            let y = (j + 1) as f64 * hy;
            boundary.push(BoundaryNode {
                position: vec![0.0, y],
                axis: 0,
                outward: -1.0,
                first: idx(0, j),
                second: (nx > 1).then(|| idx(1, j)),
                spacing: hx,
            });
            boundary.push(BoundaryNode {
                position: vec![lx, y],
                axis: 0,
                outward: 1.0,
                first: idx(nx - 1, j),
                second: (nx > 1).then(|| idx(nx - 2, j)),
                spacing: hx,
            });
        }
        for i in 0..nx {
            let x = (i + 1) as f64 * hx;
            boundary.push(BoundaryNode {
                position: vec![x, 0.0],
                axis: 1,
                outward: -1.0,
                first: idx(i, 0),
                second: (ny > 1).then(|| idx(i, 1)),
                spacing: hy,
            });
            boundary.push(BoundaryNode {
                position: vec![x, ly],
                axis: 1,
                outward: 1.0,
                first: idx(i, ny - 1),
                second: (ny > 1).then(|| idx(i, ny - 2)),
                spacing: hy,
            });
        }
    }

    Ok(Grid {
        extents: domain.extents.clone(),
        nodes: domain.nodes.clone(),
        spacing,
        points,
        weights,
        boundary,
    })
}

impl Grid {
    pub fn dimension(&self) -> usize {
        self.extents.len()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents
    }

    pub fn nodes_per_axis(&self) -> &[usize] {
        &self.nodes
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Smallest mesh spacing.
    pub fn h_min(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn coord(&self, node: usize) -> &[f64] {
        let d = self.dimension();
        &self.points[node * d..(node + 1) * d]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn boundary(&self) -> &[BoundaryNode] {
        &self.boundary
    }

    /// Lebesgue measure `|D|` of the continuous domain.
    pub fn measure(&self) -> f64 {
        self.extents.iter().product()
    }

    pub fn distance_to_boundary(&self, node: usize) -> f64 {
        self.coord(node)
            .iter()
            .zip(&self.extents)
            .map(|(&x, &l)| x.min(l - x))
            .fold(f64::INFINITY, f64::min)
    }

    /// Interior nodes at distance at least `margin` from `∂D`.
    pub fn inner_nodes(&self, margin: f64) -> Result<Vec<usize>> {
        // Node coordinates are products of h; absorb the rounding in the comparison.
        let slack = 1e-12 * self.extents.iter().copied().fold(0.0, f64::max);
        let nodes: Vec<usize> = (0..self.len())
            .filter(|&i| self.distance_to_boundary(i) + slack >= margin)
            .collect();
        if nodes.is_empty() {
            return Err(Error::Config(format!(
                "inner subdomain with margin {margin} contains no nodes"
            )));
        }
        Ok(nodes)
    }

    pub fn check_shape(&self, field: &[f64]) -> Result<()> {
        if field.len() != self.len() {
            return Err(Error::Shape { expected: self.len(), got: field.len() });
        }
        Ok(())
    }

    /// Evaluates `g` at every interior node.
    pub fn sample(&self, g: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|i| g(self.coord(i))).collect()
    }

    /// `Σ wᵢ aᵢ bᵢ`, the discrete `L²(D)` inner product.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
    }

    pub fn l2_norm(&self, field: &[f64]) -> f64 {
        self.inner(field, field).sqrt()
    }
}

/// `Σ wᵢ fieldᵢ ≈ ∫_D field dx`.
pub fn quadrature(field: &[f64], grid: &Grid) -> Result<f64> {
    grid.check_shape(field)?;
    Ok(grid.weights.iter().zip(field).map(|(w, v)| w * v).sum())
}

/// Outward normal derivative `∂u/∂ν` at a boundary node, from the one-sided
/// second-order stencil `(3u₀ − 4u₁ + u₂)/(2h)` with `u₀ = 0`.
pub fn normal_derivative(field: &[f64], grid: &Grid, boundary_node: usize) -> Result<f64> {
    grid.check_shape(field)?;
    let node = grid.boundary.get(boundary_node).ok_or(Error::NotOnBoundary(boundary_node))?;
    let u1 = field[node.first];
    Ok(match node.second {
        Some(s) => -(4.0 * u1 - field[s]) / (2.0 * node.spacing),
        None => -u1 / node.spacing,
    })
}

/// Writes coordinates plus one column per named field as CSV.
pub fn write_fields_csv<W: Write>(
    out: W,
    grid: &Grid,
    columns: &[(&str, &[f64])],
) -> std::io::Result<()> {
    let axes = ["x", "y"];
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = axes[..grid.dimension()].to_vec();
    header.extend(columns.iter().map(|(name, _)| *name));
    w.write_record(&header)?;
    for i in 0..grid.len() {
        let mut row: Vec<String> = grid.coord(i).iter().map(|x| x.to_string()).collect();
        row.extend(columns.iter().map(|(_, v)| v[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn interval_spacing() {
        let g = build_grid(&DomainSpec::interval(1.0, 4)).unwrap();
        assert_eq!(g.len(), 4);
        assert!((g.spacing()[0] - 0.2).abs() < 1e-15);
        assert!((g.coord(3)[0] - 0.8).abs() < 1e-15);
        assert_eq!(g.boundary().len(), 2);
    }

    #[test]
    fn unit_square_has_nine_nodes() {
        let g = build_grid(&DomainSpec::rectangle(1.0, 1.0, 3, 3)).unwrap();
        assert_eq!(g.len(), 9);
        // Four faces, three face-interior nodes each.
        assert_eq!(g.boundary().len(), 12);
        for b in g.boundary() {
            assert!(b.outward == 1.0 || b.outward == -1.0);
        }
        for i in 0..g.len() {
            assert!(g.distance_to_boundary(i) > 0.0);
        }
    }

    #[test]
    fn empty_interior_is_rejected() {
        let err = build_grid(&DomainSpec::interval(1.0, 0)).unwrap_err();
        assert!(err.to_string().contains("empty interior"));
        assert!(build_grid(&DomainSpec::interval(-1.0, 3)).is_err());
        assert!(build_grid(&DomainSpec { extents: vec![1.0; 3], nodes: vec![2; 3] }).is_err());
    }

    #[test]
    fn constant_integrates_to_interior_measure() {
        // Boundary values are dropped, so Σw = N h = L·N/(N+1) → |D|.
        for n in [4, 64, 255] {
            let g = build_grid(&DomainSpec::interval(1.0, n)).unwrap();
            let q = quadrature(&vec![1.0; n], &g).unwrap();
            assert!((q - n as f64 / (n as f64 + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn sine_quadrature_is_second_order() {
        let g = build_grid(&DomainSpec::interval(1.0, 255)).unwrap();
        let h = g.spacing()[0];
        let u = g.sample(|x| (PI * x[0]).sin());
        let err = (quadrature(&u, &g).unwrap() - 2.0 / PI).abs();
        assert!(err < h * h, "err {err}");
    }

    #[test]
    fn quadrature_rejects_wrong_shape() {
        let g = build_grid(&DomainSpec::interval(1.0, 4)).unwrap();
        assert_eq!(quadrature(&[1.0; 3], &g), Err(Error::Shape { expected: 4, got: 3 }));
    }

    #[test]
    fn normal_derivative_of_sine() {
        let g = build_grid(&DomainSpec::interval(1.0, 255)).unwrap();
        let u = g.sample(|x| (PI * x[0]).sin());
        let left = normal_derivative(&u, &g, 0).unwrap();
        let right = normal_derivative(&u, &g, 1).unwrap();
        assert!((left + PI).abs() < 1e-3, "left {left}");
        assert!((right + PI).abs() < 1e-3, "right {right}");
        assert_eq!(normal_derivative(&vec![0.0; 255], &g, 0).unwrap(), 0.0);
        assert_eq!(normal_derivative(&u, &g, 2), Err(Error::NotOnBoundary(2)));
    }

    #[test]
    fn normal_derivative_converges_at_second_order() {
        // Error ratio between h and h/2 against the exact derivative -π.
        let err = |n: usize| {
            let g = build_grid(&DomainSpec::interval(1.0, n)).unwrap();
            let u = g.sample(|x| (PI * x[0]).sin());
            (normal_derivative(&u, &g, 0).unwrap() + PI).abs()
        };
        for (coarse, fine) in [(15, 31), (31, 63), (63, 127)] {
            let ratio = err(coarse) / err(fine);
            assert!((ratio - 4.0).abs() < 0.3, "ratio {ratio}");
        }
    }

    #[test]
    fn inner_nodes_respect_margin() {
        let g = build_grid(&DomainSpec::interval(1.0, 9)).unwrap();
        let inner = g.inner_nodes(0.2).unwrap();
        assert_eq!(inner, vec![1, 2, 3, 4, 5, 6, 7]);
        assert!(g.inner_nodes(0.6).is_err());
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let g = build_grid(&DomainSpec::rectangle(1.0, 2.0, 2, 1)).unwrap();
        let mut buf = Vec::new();
        write_fields_csv(&mut buf, &g, &[("u", &[1.0, 2.0])]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,y,u");
        assert_eq!(lines.len(), 3);
    }
}
