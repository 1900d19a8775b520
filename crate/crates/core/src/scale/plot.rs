use std::fmt::Write;

use super::field::ScaleField;

const SIZE: f64 = 800.0;
const MARGIN: f64 = 20.0;

/// Isocline drawing of the first two lattice axes: thick gray lines hold
/// s_1 constant, thin black lines hold s_2 constant. Optional background
/// points (for example the fitting trajectory) are drawn underneath.
pub fn isocline_svg(field: &ScaleField, background: &[Vec<f64>]) -> String {
    let usable: Vec<usize> = (0..field.n_nodes()).filter(|&i| field.usable(i)).collect();
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in usable
        .iter()
        .map(|&i| field.position(i))
        .chain(background.iter().map(|v| v.as_slice()))
    {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    if !lo[0].is_finite() {
        lo = [0.0, 0.0];
        hi = [1.0, 1.0];
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    let map = |p: &[f64]| {
        (
            MARGIN + (p[0] - lo[0]) / span * (SIZE - 2.0 * MARGIN),
            SIZE - MARGIN - (p[1] - lo[1]) / span * (SIZE - 2.0 * MARGIN),
        )
    };

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    if !background.is_empty() {
        write!(svg, r##"<g fill="#9db8d9" stroke="none">"##).unwrap();
        for p in background {
            let (x, y) = map(p);
            write!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="0.8"/>"#).unwrap();
        }
        writeln!(svg, "</g>").unwrap();
    }
    let shape = &field.shape;
    if shape.len() >= 2 {
        // Polylines along `vary` with the other axis fixed; higher axes at
        // their reference index.
        let mut rest: Vec<usize> = (0..shape.len()).map(|a| (-field.lo[a]).clamp(0, shape[a] as i64 - 1) as usize).collect();
        for (vary, style) in [(1usize, r##"stroke="#888888" stroke-width="2.5""##), (0, r##"stroke="black" stroke-width="0.8""##)] {
            let fixed = 1 - vary;
            writeln!(svg, r#"<g fill="none" {style}>"#).unwrap();
            for i in 0..shape[fixed] {
                rest[fixed] = i;
                let mut run: Vec<(f64, f64)> = Vec::new();
                let flush = |run: &mut Vec<(f64, f64)>, svg: &mut String| {
                    if run.len() >= 2 {
                        let pts: Vec<String> = run.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                        writeln!(svg, r#"<polyline points="{}"/>"#, pts.join(" ")).unwrap();
                    }
                    run.clear();
                };
                for j in 0..shape[vary] {
                    rest[vary] = j;
                    let node = field.ravel(&rest);
                    if field.usable(node) {
                        run.push(map(field.position(node)));
                    } else {
                        flush(&mut run, &mut svg);
                    }
                }
                flush(&mut run, &mut svg);
            }
            writeln!(svg, "</g>").unwrap();
        }
        let (x, y) = map(&field.reference.x0);
        writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="red"/>"#).unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}
