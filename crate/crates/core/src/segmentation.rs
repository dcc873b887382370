//! Superpixel segmentation: a deterministic grid tiler and a SLIC-style
//! clustering segmenter. Segments are the interpretable components the
//! explainer toggles on and off.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::GrayImage;
use crate::error::{Error, Result};

/// Per-pixel segment labels covering the image with 4-connected regions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub segment_count: usize,
}

impl SegmentMap {
    #[inline]
    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Pixel indices grouped by segment.
    pub fn segment_pixels(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.segment_count];
        for (i, &l) in self.labels.iter().enumerate() {
            groups[l as usize].push(i);
        }
        groups
    }

    /// Checks full coverage (every label in 0..S occurs) and 4-connectivity
    /// of every segment.
    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.width * self.height {
            return Err(Error::invalid("label buffer does not match dimensions"));
        }
        let mut seen = vec![false; self.segment_count];
        for &l in &self.labels {
            if (l as usize) >= self.segment_count {
                return Err(Error::invalid(format!(
                    "label {l} out of range 0..{}",
                    self.segment_count
                )));
            }
            seen[l as usize] = true;
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::invalid("some segment labels never occur"));
        }
        let components = connected_components(&self.labels, self.width, self.height);
        let mut label_of_component = std::collections::HashMap::new();
        for (pixel, &comp) in components.comp_of_pixel.iter().enumerate() {
            let entry = label_of_component.entry(comp).or_insert(self.labels[pixel]);
            if *entry != self.labels[pixel] {
                return Err(Error::invalid("internal: component spans two labels"));
            }
        }
        let mut comps_per_label = vec![0usize; self.segment_count];
        for (&comp, &label) in &label_of_component {
            let _ = comp;
            comps_per_label[label as usize] += 1;
        }
        if comps_per_label.iter().any(|&c| c != 1) {
            return Err(Error::invalid("segment is not 4-connected"));
        }
        Ok(())
    }

    /// Label image with labels scaled across the gray range, for inspection.
    pub fn to_pgm_image(&self) -> GrayImage {
        let scale = |l: u32| -> u8 {
            if self.segment_count <= 1 {
                0
            } else {
                (l as f64 * 255.0 / (self.segment_count - 1) as f64).round() as u8
            }
        };
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.labels.iter().map(|&l| scale(l)).collect(),
        }
    }
}

/// Tiles the image into ceil(w/cell) x ceil(h/cell) rectangles, numbered
/// row-major. Edge cells may be smaller.
pub fn segment_grid(image: &GrayImage, cell: usize) -> Result<SegmentMap> {
    if cell == 0 {
        return Err(Error::invalid("grid cell size must be positive"));
    }
    if cell > image.width.min(image.height) {
        return Err(Error::invalid(format!(
            "grid cell {cell} exceeds min image dimension {}",
            image.width.min(image.height)
        )));
    }
    let cells_x = image.width.div_ceil(cell);
    let cells_y = image.height.div_ceil(cell);
    let mut labels = Vec::with_capacity(image.len());
    for y in 0..image.height {
        for x in 0..image.width {
            labels.push(((y / cell) * cells_x + x / cell) as u32);
        }
    }
    Ok(SegmentMap {
        width: image.width,
        height: image.height,
        labels,
        segment_count: cells_x * cells_y,
    })
}

/// SLIC-style superpixels: k-means in (intensity, x, y) with the spatial
/// terms scaled by compactness, grid initialization (seed-jittered), and a
/// connectivity pass that merges orphaned fragments into the largest
/// adjacent segment.
pub fn segment_slic(
    image: &GrayImage,
    target_segments: usize,
    compactness: f64,
    iterations: usize,
    seed: u64,
) -> Result<SegmentMap> {
    let n = image.len();
    if target_segments == 0 {
        return Err(Error::invalid("target segment count must be positive"));
    }
    if target_segments > n {
        return Err(Error::invalid(format!(
            "target segments {target_segments} exceeds pixel count {n}"
        )));
    }
    if compactness <= 0.0 {
        return Err(Error::invalid("compactness must be positive"));
    }
    if iterations == 0 {
        return Err(Error::invalid("iteration count must be positive"));
    }

    let (w, h) = (image.width, image.height);
    let step = (n as f64 / target_segments as f64).sqrt();
    let mut grid_x = ((w as f64 / step).round() as usize).max(1);
    let mut grid_y = ((h as f64 / step).round() as usize).max(1);
    // Never initialize with fewer centers than requested; grow the axis with
    // the coarser spacing until the grid reaches the target.
    while grid_x * grid_y < target_segments {
        if w as f64 / grid_x as f64 >= h as f64 / grid_y as f64 {
            grid_x += 1;
        } else {
            grid_y += 1;
        }
    }

    // Seed-jittered grid initialization.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell_w = w as f64 / grid_x as f64;
    let cell_h = h as f64 / grid_y as f64;
    let jitter = cell_w.min(cell_h) / 4.0;
    struct Center {
        intensity: f64,
        x: f64,
        y: f64,
    }
    let mut centers = Vec::with_capacity(grid_x * grid_y);
    for gy in 0..grid_y {
        for gx in 0..grid_x {
            let jx: f64 = rng.gen_range(-jitter..=jitter);
            let jy: f64 = rng.gen_range(-jitter..=jitter);
            let cx = ((gx as f64 + 0.5) * cell_w + jx).clamp(0.0, (w - 1) as f64);
            let cy = ((gy as f64 + 0.5) * cell_h + jy).clamp(0.0, (h - 1) as f64);
            let intensity = image.get(cx.round() as usize, cy.round() as usize) as f64;
            centers.push(Center {
                intensity,
                x: cx,
                y: cy,
            });
        }
    }

    let spatial_scale = compactness / step;
    let mut assignment = vec![0u32; n];
    for _ in 0..iterations {
        let mut best = vec![f64::INFINITY; n];
        // Each center claims pixels within a 2*step window.
        for (ci, c) in centers.iter().enumerate() {
            let x_lo = ((c.x - 2.0 * step).floor().max(0.0)) as usize;
            let x_hi = (((c.x + 2.0 * step).ceil()) as usize).min(w - 1);
            let y_lo = ((c.y - 2.0 * step).floor().max(0.0)) as usize;
            let y_hi = (((c.y + 2.0 * step).ceil()) as usize).min(h - 1);
            for y in y_lo..=y_hi {
                for x in x_lo..=x_hi {
                    let di = image.get(x, y) as f64 - c.intensity;
                    let dx = (x as f64 - c.x) * spatial_scale;
                    let dy = (y as f64 - c.y) * spatial_scale;
                    let d = di * di + dx * dx + dy * dy;
                    let idx = y * w + x;
                    if d < best[idx] {
                        best[idx] = d;
                        assignment[idx] = ci as u32;
                    }
                }
            }
        }
        // Pixels missed by every window fall back to a full scan.
        for idx in 0..n {
            if best[idx].is_infinite() {
                let (x, y) = (idx % w, idx / w);
                let mut best_d = f64::INFINITY;
                for (ci, c) in centers.iter().enumerate() {
                    let di = image.get(x, y) as f64 - c.intensity;
                    let dx = (x as f64 - c.x) * spatial_scale;
                    let dy = (y as f64 - c.y) * spatial_scale;
                    let d = di * di + dx * dx + dy * dy;
                    if d < best_d {
                        best_d = d;
                        assignment[idx] = ci as u32;
                    }
                }
            }
        }
        // Recompute centers.
        let mut sums = vec![(0.0f64, 0.0f64, 0.0f64, 0usize); centers.len()];
        for idx in 0..n {
            let (x, y) = (idx % w, idx / w);
            let s = &mut sums[assignment[idx] as usize];
            s.0 += image.pixels[idx] as f64;
            s.1 += x as f64;
            s.2 += y as f64;
            s.3 += 1;
        }
        for (c, s) in centers.iter_mut().zip(&sums) {
            if s.3 > 0 {
                let count = s.3 as f64;
                c.intensity = s.0 / count;
                c.x = s.1 / count;
                c.y = s.2 / count;
            }
        }
    }

    let labels = enforce_connectivity(&assignment, w, h);
    let segment_count = labels.iter().map(|&l| l as usize).max().unwrap_or(0) + 1;
    let map = SegmentMap {
        width: w,
        height: h,
        labels,
        segment_count,
    };
    debug_assert!(map.validate().is_ok());
    Ok(map)
}

struct Components {
    comp_of_pixel: Vec<u32>,
    sizes: Vec<usize>,
    label_of_comp: Vec<u32>,
}

fn connected_components(labels: &[u32], w: usize, h: usize) -> Components {
    let n = labels.len();
    let mut comp_of_pixel = vec![u32::MAX; n];
    let mut sizes = Vec::new();
    let mut label_of_comp = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if comp_of_pixel[start] != u32::MAX {
            continue;
        }
        let comp = sizes.len() as u32;
        let label = labels[start];
        let mut size = 0usize;
        stack.push(start);
        comp_of_pixel[start] = comp;
        while let Some(idx) = stack.pop() {
            size += 1;
            let (x, y) = (idx % w, idx / w);
            let mut visit = |nidx: usize| {
                if comp_of_pixel[nidx] == u32::MAX && labels[nidx] == label {
                    comp_of_pixel[nidx] = comp;
                    stack.push(nidx);
                }
            };
            if x > 0 {
                visit(idx - 1);
            }
            if x + 1 < w {
                visit(idx + 1);
            }
            if y > 0 {
                visit(idx - w);
            }
            if y + 1 < h {
                visit(idx + w);
            }
        }
        sizes.push(size);
        label_of_comp.push(label);
    }
    Components {
        comp_of_pixel,
        sizes,
        label_of_comp,
    }
}

/// Keeps the largest connected component of each k-means label as a segment
/// and merges every other fragment into the largest adjacent retained
/// segment, then renumbers labels densely in scan order.
fn enforce_connectivity(assignment: &[u32], w: usize, h: usize) -> Vec<u32> {
    let comps = connected_components(assignment, w, h);
    let comp_count = comps.sizes.len();

    // Largest component per original label is retained.
    let mut largest_of_label: std::collections::HashMap<u32, u32> = std::collections::HashMap::new();
    for comp in 0..comp_count {
        let label = comps.label_of_comp[comp];
        let entry = largest_of_label.entry(label).or_insert(comp as u32);
        if comps.sizes[comp] > comps.sizes[*entry as usize] {
            *entry = comp as u32;
        }
    }
    let mut retained = vec![false; comp_count];
    for &comp in largest_of_label.values() {
        retained[comp as usize] = true;
    }

    // merged_into[c] tracks where fragment c currently belongs.
    let mut merged_into: Vec<u32> = (0..comp_count as u32).collect();
    let resolve = |merged_into: &Vec<u32>, mut c: u32| -> u32 {
        while merged_into[c as usize] != c {
            c = merged_into[c as usize];
        }
        c
    };

    let mut region_size = comps.sizes.clone();
    loop {
        // Fragments in deterministic order: size descending, then index.
        let mut fragments: Vec<u32> = (0..comp_count as u32)
            .filter(|&c| !retained[resolve(&merged_into, c) as usize] && merged_into[c as usize] == c)
            .collect();
        if fragments.is_empty() {
            break;
        }
        fragments.sort_by_key(|&c| (std::cmp::Reverse(comps.sizes[c as usize]), c));
        let mut progressed = false;
        for &frag in &fragments {
            // Collect adjacent retained regions.
            let mut best: Option<(usize, u32)> = None; // (size, region)
            for idx in 0..assignment.len() {
                if resolve(&merged_into, comps.comp_of_pixel[idx]) != frag {
                    continue;
                }
                let (x, y) = (idx % w, idx / w);
                let mut consider = |nidx: usize| {
                    let neigh = resolve(&merged_into, comps.comp_of_pixel[nidx]);
                    if neigh != frag && retained[neigh as usize] {
                        let size = region_size[neigh as usize];
                        let better = match best {
                            None => true,
                            Some((bs, br)) => size > bs || (size == bs && neigh < br),
                        };
                        if better {
                            best = Some((size, neigh));
                        }
                    }
                };
                if x > 0 {
                    consider(idx - 1);
                }
                if x + 1 < w {
                    consider(idx + 1);
                }
                if y > 0 {
                    consider(idx - w);
                }
                if y + 1 < h {
                    consider(idx + w);
                }
            }
            if let Some((_, region)) = best {
                merged_into[frag as usize] = region;
                region_size[region as usize] += comps.sizes[frag as usize];
                progressed = true;
            }
        }
        if !progressed {
            // No fragment touches a retained region yet; retain the largest
            // remaining fragment so the loop can make progress.
            let frag = fragments[0];
            retained[frag as usize] = true;
        }
    }

    // Dense renumbering in scan order.
    let mut new_label = vec![u32::MAX; comp_count];
    let mut next = 0u32;
    let mut out = vec![0u32; assignment.len()];
    for idx in 0..assignment.len() {
        let region = resolve(&merged_into, comps.comp_of_pixel[idx]);
        if new_label[region as usize] == u32::MAX {
            new_label[region as usize] = next;
            next += 1;
        }
        out[idx] = new_label[region as usize];
    }
    out
}
