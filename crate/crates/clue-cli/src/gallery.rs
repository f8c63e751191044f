//! SVG gallery of an explanation set: the original input followed by every
//! explanation tile, annotated with predicted label, MC entropy, and input
//! distance.
//!
//! Tiles are PNG-encoded grayscale images embedded as data URIs. Each tile
//! also carries the exact underlying values in `data-*` attributes so the
//! annotations can be cross-checked against the CSV rows.

use std::fmt::Write as _;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use clue_core::search::ClueSet;
use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder};

const TILE: f64 = 84.0;
const PAD: f64 = 14.0;
const TEXT_H: f64 = 30.0;
const PER_ROW: usize = 10;

/// Encodes one grayscale image (pixels in [0,1], row-major) as a PNG data
/// URI.
pub fn png_data_uri(pixels: &[f64], rows: usize, cols: usize) -> String {
    let bytes: Vec<u8> = pixels
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let mut png = Vec::new();
    PngEncoder::new(&mut png)
        .write_image(&bytes, cols as u32, rows as u32, ExtendedColorType::L8)
        .expect("in-memory png encode");
    format!("data:image/png;base64,{}", BASE64.encode(&png))
}

/// Renders the SVG gallery grid. `rows`/`cols` are the image dimensions.
pub fn render_gallery(set: &ClueSet, rows: usize, cols: usize) -> String {
    let tiles = 1 + set.results.len();
    let grid_rows = tiles.div_ceil(PER_ROW);
    let cell_w = TILE + PAD;
    let cell_h = TILE + 2.0 * TEXT_H + PAD;
    let width = PER_ROW as f64 * cell_w + PAD;
    let height = grid_rows as f64 * cell_h + PAD;

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\">\n\
         <rect width=\"{width:.0}\" height=\"{height:.0}\" fill=\"white\"/>\n"
    );

    let place = |idx: usize,
                     svg: &mut String,
                     pixels: &[f64],
                     above: String,
                     below: String,
                     attrs: String,
                     accepted: bool| {
        let gx = (idx % PER_ROW) as f64 * cell_w + PAD;
        let gy = (idx / PER_ROW) as f64 * cell_h + PAD;
        let border = if accepted { "#2ca02c" } else { "#d62728" };
        let uri = png_data_uri(pixels, rows, cols);
        let _ = write!(
            svg,
            "<g{attrs}>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"11\">{above}</text>\n\
             <image x=\"{gx:.1}\" y=\"{:.1}\" width=\"{TILE:.0}\" height=\"{TILE:.0}\" \
             image-rendering=\"pixelated\" href=\"{uri}\"/>\n\
             <rect x=\"{gx:.1}\" y=\"{:.1}\" width=\"{TILE:.0}\" height=\"{TILE:.0}\" \
             fill=\"none\" stroke=\"{border}\" stroke-width=\"1.5\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"11\">{below}</text>\n\
             </g>\n",
            gx + TILE / 2.0,
            gy + TEXT_H - 8.0,
            gy + TEXT_H,
            gy + TEXT_H,
            gx + TILE / 2.0,
            gy + TEXT_H + TILE + 16.0,
        );
    };

    // Original input first.
    let o = &set.origin;
    place(
        0,
        &mut svg,
        &o.x0,
        format!(
            "original: {} H={:.3}",
            o.predictive.label, o.predictive.entropy
        ),
        "d=0".to_string(),
        format!(
            " data-label=\"{}\" data-h=\"{}\" data-dx=\"0\"",
            o.predictive.label, o.predictive.entropy
        ),
        true,
    );

    for (i, r) in set.results.iter().enumerate() {
        place(
            i + 1,
            &mut svg,
            &r.x,
            format!("{} H={:.3}", r.predictive.label, r.predictive.entropy),
            format!("d={:.1}", r.input_distance),
            format!(
                " data-init=\"{}\" data-label=\"{}\" data-h=\"{}\" data-dx=\"{}\"",
                r.init_index, r.predictive.label, r.predictive.entropy, r.input_distance
            ),
            r.accepted,
        );
    }

    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use clue_core::models::PredictiveOutput;
    use clue_core::search::{ClueResult, Origin, SearchConfig};

    fn tiny_set(n: usize) -> ClueSet {
        let results = (0..n)
            .map(|i| ClueResult {
                z: vec![0.0; 2],
                x: vec![0.5; 16],
                predictive: PredictiveOutput {
                    probs: vec![1.0, 0.0],
                    entropy: 0.25 + i as f64,
                    label: i % 2,
                },
                input_distance: 3.5 + i as f64,
                prediction_distance: 0.0,
                latent_distance: 0.5,
                loss: 0.1,
                cost: 0.1,
                accepted: i % 2 == 0,
                converged: true,
                steps: 4,
                init_index: i,
                on_shell: false,
            })
            .collect();
        ClueSet {
            origin: Origin {
                x0: vec![0.2; 16],
                z0: vec![0.0; 2],
                predictive: PredictiveOutput {
                    probs: vec![0.5, 0.5],
                    entropy: 0.6931,
                    label: 0,
                },
            },
            config: SearchConfig::default(),
            results,
            failures: Vec::new(),
        }
    }

    #[test]
    fn gallery_has_one_tile_per_result_plus_original() {
        let set = tiny_set(7);
        let svg = render_gallery(&set, 4, 4);
        assert_eq!(svg.matches("<image").count(), 8);
        // Exact values ride along for cross-checking.
        assert!(svg.contains(&format!("data-h=\"{}\"", set.results[0].predictive.entropy)));
        assert!(svg.contains(&format!("data-dx=\"{}\"", set.results[3].input_distance)));
    }
}
