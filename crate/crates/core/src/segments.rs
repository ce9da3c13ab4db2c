//! Pixel-wise prediction and 8-connected segment extraction.

use crate::dataio::{LabelMask, ProbMap, UNLABELED};

/// `seg_id` value of pixels that belong to no segment.
pub const NO_SEGMENT: u32 = u32::MAX;

/// Offsets of the 8-neighborhood as `(drow, dcol)`.
pub const NEIGHBORS_8: [(i64, i64); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Per-pixel argmax of the class vector; ties go to the lowest class id.
pub fn argmax_prediction(probs: &ProbMap) -> LabelMask {
    let labels = (0..probs.num_pixels())
        .map(|pixel| argmax(probs.row(pixel)) as u16)
        .collect();
    LabelMask {
        height: probs.height,
        width: probs.width,
        labels,
    }
}

pub(crate) fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &p) in row.iter().enumerate().skip(1) {
        if p > row[best] {
            best = i;
        }
    }
    best
}

/// Maximal 8-connected same-class components of a mask.
///
/// Segments are numbered densely in the order of their smallest row-major
/// pixel index, so the numbering does not depend on how the mask was traversed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentMap {
    pub height: u32,
    pub width: u32,
    pub seg_id: Vec<u32>,
    pub seg_class: Vec<u16>,
    /// Row-major pixel indices of each segment, ascending.
    pub seg_pixels: Vec<Vec<u32>>,
}

impl SegmentMap {
    pub fn num_segments(&self) -> usize {
        self.seg_class.len()
    }

    pub fn size(&self, segment: usize) -> usize {
        self.seg_pixels[segment].len()
    }

    /// In-image 8-neighbors of a pixel.
    pub fn neighbors(&self, pixel: usize) -> impl Iterator<Item = usize> + '_ {
        let (h, w) = (self.height as i64, self.width as i64);
        let (r, c) = ((pixel as i64) / w, (pixel as i64) % w);
        NEIGHBORS_8.iter().filter_map(move |&(dr, dc)| {
            let (nr, nc) = (r + dr, c + dc);
            (nr >= 0 && nr < h && nc >= 0 && nc < w).then_some((nr * w + nc) as usize)
        })
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        // Smaller provisional label wins, which keeps roots in scan order.
        if ra < rb {
            self.parent[rb as usize] = ra;
        } else if rb < ra {
            self.parent[ra as usize] = rb;
        }
    }
}

/// Two-pass union-find labeling with 8-connectivity.
///
/// With `treat_sentinel_as_background`, [`UNLABELED`] pixels join no segment and
/// carry [`NO_SEGMENT`].
pub fn connected_components(mask: &LabelMask, treat_sentinel_as_background: bool) -> SegmentMap {
    let (h, w) = (mask.height as usize, mask.width as usize);
    let labels = &mask.labels;
    let skip = |l: u16| treat_sentinel_as_background && l == UNLABELED;

    let mut provisional = vec![NO_SEGMENT; h * w];
    let mut sets = DisjointSet { parent: Vec::new() };

    for r in 0..h {
        for c in 0..w {
            let p = r * w + c;
            let class = labels[p];
            if skip(class) {
                continue;
            }
            // Already-visited half of the 8-neighborhood: W, NW, N, NE.
            let mut current = NO_SEGMENT;
            let visit = |q: usize, current: &mut u32, sets: &mut DisjointSet| {
                if labels[q] == class && provisional[q] != NO_SEGMENT {
                    if *current == NO_SEGMENT {
                        *current = provisional[q];
                    } else {
                        sets.union(*current, provisional[q]);
                    }
                }
            };
            if c > 0 {
                visit(p - 1, &mut current, &mut sets);
            }
            if r > 0 {
                if c > 0 {
                    visit(p - w - 1, &mut current, &mut sets);
                }
                visit(p - w, &mut current, &mut sets);
                if c + 1 < w {
                    visit(p - w + 1, &mut current, &mut sets);
                }
            }
            if current == NO_SEGMENT {
                current = sets.parent.len() as u32;
                sets.parent.push(current);
            }
            provisional[p] = current;
        }
    }

    let mut dense = vec![NO_SEGMENT; sets.parent.len()];
    let mut seg_id = vec![NO_SEGMENT; h * w];
    let mut seg_class = Vec::new();
    let mut seg_pixels: Vec<Vec<u32>> = Vec::new();
    for p in 0..h * w {
        if provisional[p] == NO_SEGMENT {
            continue;
        }
        let root = sets.find(provisional[p]) as usize;
        if dense[root] == NO_SEGMENT {
            dense[root] = seg_class.len() as u32;
            seg_class.push(labels[p]);
            seg_pixels.push(Vec::new());
        }
        let id = dense[root];
        seg_id[p] = id;
        seg_pixels[id as usize].push(p as u32);
    }

    SegmentMap {
        height: mask.height,
        width: mask.width,
        seg_id,
        seg_class,
        seg_pixels,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentShape {
    pub size: usize,
    pub interior_size: usize,
    pub boundary_size: usize,
    /// Mean `(row, col)` of the segment's pixels.
    pub barycenter: (f64, f64),
}

/// Interior/boundary split of every segment of a [`SegmentMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentGeometry {
    pub shapes: Vec<SegmentShape>,
    /// Per pixel: all eight neighbors lie inside the image and in the same segment.
    pub interior: Vec<bool>,
}

/// Pixels on the image border are always boundary pixels.
pub fn geometry(map: &SegmentMap) -> SegmentGeometry {
    let (h, w) = (map.height as usize, map.width as usize);
    let mut interior = vec![false; h * w];
    for r in 1..h.saturating_sub(1) {
        for c in 1..w.saturating_sub(1) {
            let p = r * w + c;
            let id = map.seg_id[p];
            if id == NO_SEGMENT {
                continue;
            }
            interior[p] = map.neighbors(p).all(|q| map.seg_id[q] == id);
        }
    }
    let shapes = map
        .seg_pixels
        .iter()
        .map(|pixels| {
            let size = pixels.len();
            let interior_size = pixels.iter().filter(|&&p| interior[p as usize]).count();
            let (mut sr, mut sc) = (0.0, 0.0);
            for &p in pixels {
                sr += (p as usize / w) as f64;
                sc += (p as usize % w) as f64;
            }
            SegmentShape {
                size,
                interior_size,
                boundary_size: size - interior_size,
                barycenter: (sr / size as f64, sc / size as f64),
            }
        })
        .collect();
    SegmentGeometry { shapes, interior }
}
