//! Budgeted quadtree codec.
//!
//! A frame is split greedily into quadrants until the serialized tree would
//! exceed its bit budget. Each leaf stores one 8-bit intensity that fills
//! its whole block, which is what produces the blocking artifacts the
//! restoration network is trained to remove.
//!
//! Bitstream layout (MSB first, zero padded to a whole byte): nodes in
//! depth-first preorder, one bit per node (`1` split, `0` leaf), each leaf
//! bit followed immediately by the leaf's 8-bit level. Children are ordered
//! top-left, top-right, bottom-left, bottom-right.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::image::{quantize8, to_u8, Plane};
use crate::Frame;

/// Bits used by a leaf: its node flag plus its 8-bit value.
pub const LEAF_BITS: u64 = 9;
/// Extra bits spent when one leaf becomes an internal node with four leaves.
pub const SPLIT_BITS: u64 = 1 + 3 * LEAF_BITS;
/// Default priority multiplier for region-of-interest pixels.
pub const DEFAULT_ROI_WEIGHT: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Region {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl Region {
    pub fn area(&self) -> usize {
        self.width * self.height
    }

    /// Blocks narrower or shorter than two pixels are never divided.
    pub fn splittable(&self) -> bool {
        self.width >= 2 && self.height >= 2
    }

    pub fn quadrants(&self) -> [Region; 4] {
        let hw = self.width / 2;
        let hh = self.height / 2;
        let (x1, y1) = (self.x0 + hw, self.y0 + hh);
        [
            Region { x0: self.x0, y0: self.y0, width: hw, height: hh },
            Region { x0: x1, y0: self.y0, width: self.width - hw, height: hh },
            Region { x0: self.x0, y0: y1, width: hw, height: self.height - hh },
            Region { x0: x1, y0: y1, width: self.width - hw, height: self.height - hh },
        ]
    }

    fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.y0..self.y0 + self.height)
            .flat_map(move |y| (self.x0..self.x0 + self.width).map(move |x| (y, x)))
    }
}

/// Binary object-of-interest map; marked pixels are refined first.
#[derive(Clone, Debug, PartialEq)]
pub struct RoiMask(Plane<bool>);

impl RoiMask {
    pub fn new(mask: Plane<bool>) -> Self {
        Self(mask)
    }

    /// Pixels at or above mid-gray are inside the mask.
    pub fn from_frame(frame: &Frame) -> Self {
        Self(frame.map(|v| v >= 0.5))
    }

    pub fn from_rects(height: usize, width: usize, rects: &[Region]) -> Self {
        let mut m = Plane::filled(height, width, false);
        for r in rects {
            for (y, x) in r.pixels() {
                if y < height && x < width {
                    m.set(y, x, true);
                }
            }
        }
        Self(m)
    }

    pub fn to_frame(&self) -> Frame {
        self.0.map(|b| if b { 1.0 } else { 0.0 })
    }

    pub fn plane(&self) -> &Plane<bool> {
        &self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn fraction(&self, region: &Region) -> f64 {
        let inside = region.pixels().filter(|&(y, x)| self.0.get(y, x)).count();
        inside as f64 / region.area() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct BitBudget(u64);

impl BitBudget {
    pub fn new(bits: u64) -> Result<Self> {
        if bits < LEAF_BITS {
            return Err(Error::Budget { budget: bits, min: LEAF_BITS });
        }
        Ok(Self(bits))
    }

    pub fn bits(&self) -> u64 {
        self.0
    }

    /// The largest budget that admits exactly `splits` splits.
    pub fn for_splits(splits: u64) -> Self {
        Self(LEAF_BITS + splits * SPLIT_BITS)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Leaf { region: Region, mean: f64 },
    Split { region: Region, children: [usize; 4] },
}

impl Node {
    pub fn region(&self) -> Region {
        match self {
            Node::Leaf { region, .. } | Node::Split { region, .. } => *region,
        }
    }
}

/// Quadtree over a `height x width` frame. Node 0 is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadTree {
    height: usize,
    width: usize,
    nodes: Vec<Node>,
}

/// Greedy refinement knobs. `roi_weight` is the multiplier applied to the
/// fraction of a leaf that lies inside the ROI.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CodecConfig {
    pub roi_weight: f64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self { roi_weight: DEFAULT_ROI_WEIGHT }
    }
}

struct Candidate {
    priority: f64,
    origin: Reverse<(usize, usize)>,
    node: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then(self.origin.cmp(&other.origin))
            .then(other.node.cmp(&self.node))
    }
}

struct RegionStats {
    mean: f64,
    sse: f64,
    quantized_sse: f64,
}

fn region_stats(frame: &Frame, region: &Region) -> RegionStats {
    let n = region.area() as f64;
    let first = frame.get(region.y0, region.x0);
    if region.pixels().all(|(y, x)| frame.get(y, x) == first) {
        let q = quantize8(first);
        return RegionStats { mean: first, sse: 0.0, quantized_sse: (first - q) * (first - q) * n };
    }
    let sum: f64 = region.pixels().map(|(y, x)| frame.get(y, x)).sum();
    let mean = sum / n;
    let q = quantize8(mean);
    let (mut sse, mut qsse) = (0.0, 0.0);
    for (y, x) in region.pixels() {
        let v = frame.get(y, x);
        sse += (v - mean) * (v - mean);
        qsse += (v - q) * (v - q);
    }
    RegionStats { mean, sse, quantized_sse: qsse }
}

/// Builds a tree with the default refinement settings.
pub fn build_quadtree(frame: &Frame, budget: BitBudget, roi: Option<&RoiMask>) -> Result<QuadTree> {
    build_quadtree_with(frame, budget, roi, CodecConfig::default())
}

/// Greedy budgeted refinement.
///
/// Leaves are kept in a max-heap keyed by `sse * (1 + roi_weight * roi_fraction)`,
/// ties going to the topmost then leftmost block. The top leaf is split while
/// the cost of the resulting tree stays within `budget`. A leaf whose split
/// would raise the 8-bit reconstruction error (possible only through level
/// rounding) is frozen instead, so the rendered error never grows with the
/// budget.
pub fn build_quadtree_with(
    frame: &Frame,
    budget: BitBudget,
    roi: Option<&RoiMask>,
    cfg: CodecConfig,
) -> Result<QuadTree> {
    if frame.is_empty() {
        return Err(Error::InvalidValue("cannot encode an empty frame".into()));
    }
    if let Some(mask) = roi {
        if mask.dims() != frame.dims() {
            let (h, w) = mask.dims();
            return Err(Error::Shape {
                expected: (1, frame.height(), frame.width()),
                actual: (1, h, w),
            });
        }
    }
    BitBudget::new(budget.bits())?;

    let (height, width) = frame.dims();
    let root = Region { x0: 0, y0: 0, width, height };
    let priority = |region: &Region, sse: f64| {
        let roi_frac = roi.map_or(0.0, |m| m.fraction(region));
        sse * (1.0 + cfg.roi_weight * roi_frac)
    };

    let mut nodes = Vec::new();
    let mut stats = Vec::new();
    let mut heap = BinaryHeap::new();
    let push_leaf = |nodes: &mut Vec<Node>,
                         stats: &mut Vec<RegionStats>,
                         heap: &mut BinaryHeap<Candidate>,
                         region: Region| {
        let s = region_stats(frame, &region);
        let idx = nodes.len();
        if region.splittable() && s.sse > 0.0 {
            heap.push(Candidate {
                priority: priority(&region, s.sse),
                origin: Reverse((region.y0, region.x0)),
                node: idx,
            });
        }
        nodes.push(Node::Leaf { region, mean: s.mean });
        stats.push(s);
        idx
    };
    push_leaf(&mut nodes, &mut stats, &mut heap, root);

    let mut cost = LEAF_BITS;
    while let Some(top) = heap.pop() {
        if cost + SPLIT_BITS > budget.bits() {
            break;
        }
        let region = nodes[top.node].region();
        let quads = region.quadrants();
        let child_qsse: f64 = quads
            .iter()
            .map(|q| region_stats(frame, q).quantized_sse)
            .sum();
        let parent_qsse = stats[top.node].quantized_sse;
        if child_qsse > parent_qsse + 1e-12 * parent_qsse.max(1.0) {
            continue;
        }
        let mut children = [0; 4];
        for (slot, q) in children.iter_mut().zip(quads) {
            *slot = push_leaf(&mut nodes, &mut stats, &mut heap, q);
        }
        nodes[top.node] = Node::Split { region, children };
        cost += SPLIT_BITS;
    }

    Ok(QuadTree { height, width, nodes }.into_preorder())
}

impl QuadTree {
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaves(&self) -> impl Iterator<Item = (Region, f64)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { region, mean } => Some((*region, *mean)),
            Node::Split { .. } => None,
        })
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().count()
    }

    pub fn internal_count(&self) -> usize {
        self.nodes.len() - self.leaf_count()
    }

    /// `internal + leaves + 8 * leaves`.
    pub fn bit_cost(&self) -> u64 {
        let leaves = self.leaf_count() as u64;
        self.internal_count() as u64 + leaves + 8 * leaves
    }

    /// The same tree with each leaf mean replaced by its 8-bit level.
    pub fn quantized(&self) -> QuadTree {
        let nodes = self
            .nodes
            .iter()
            .map(|n| match n {
                Node::Leaf { region, mean } => Node::Leaf { region: *region, mean: quantize8(*mean) },
                split => split.clone(),
            })
            .collect();
        QuadTree { height: self.height, width: self.width, nodes }
    }

    /// Reorders the node arena so that nodes appear in preorder.
    fn into_preorder(self) -> QuadTree {
        let order = self.preorder();
        let mut position = vec![0; self.nodes.len()];
        for (new, &old) in order.iter().enumerate() {
            position[old] = new;
        }
        let nodes = order
            .iter()
            .map(|&old| match &self.nodes[old] {
                Node::Split { region, children } => Node::Split { region: *region, children: children.map(|c| position[c]) },
                leaf => leaf.clone(),
            })
            .collect();
        QuadTree { height: self.height, width: self.width, nodes }
    }

    fn preorder(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![0];
        while let Some(i) = stack.pop() {
            order.push(i);
            if let Node::Split { children, .. } = &self.nodes[i] {
                stack.extend(children.iter().rev());
            }
        }
        order
    }
}

/// Fills every leaf block with the leaf's 8-bit level.
pub fn render_quadtree(tree: &QuadTree) -> Frame {
    let mut out = Plane::zeros(tree.height, tree.width);
    for (region, mean) in tree.leaves() {
        let v = quantize8(mean);
        for (y, x) in region.pixels() {
            out.set(y, x, v);
        }
    }
    out
}

/// Encode then decode in one step.
pub fn degrade(frame: &Frame, budget: BitBudget, roi: Option<&RoiMask>) -> Result<Frame> {
    Ok(render_quadtree(&build_quadtree(frame, budget, roi)?))
}

pub fn degrade_with(
    frame: &Frame,
    budget: BitBudget,
    roi: Option<&RoiMask>,
    cfg: CodecConfig,
) -> Result<Frame> {
    Ok(render_quadtree(&build_quadtree_with(frame, budget, roi, cfg)?))
}

/// Serialized bits plus the number of meaningful bits (before padding).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitstream {
    pub bytes: Vec<u8>,
    pub bit_len: u64,
}

#[derive(Default)]
struct BitWriter {
    bytes: Vec<u8>,
    len: u64,
}

impl BitWriter {
    fn push(&mut self, bit: bool) {
        if self.len.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 0x80 >> (self.len % 8);
        }
        self.len += 1;
    }

    fn push_u8(&mut self, v: u8) {
        for i in (0..8).rev() {
            self.push(v >> i & 1 == 1);
        }
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: u64,
}

impl BitReader<'_> {
    fn bit(&mut self) -> Result<bool> {
        let byte = self
            .bytes
            .get((self.pos / 8) as usize)
            .ok_or_else(|| Error::Bitstream("unexpected end of stream".into()))?;
        let b = byte & (0x80 >> (self.pos % 8)) != 0;
        self.pos += 1;
        Ok(b)
    }

    fn u8(&mut self) -> Result<u8> {
        let mut v = 0u8;
        for _ in 0..8 {
            v = v << 1 | self.bit()? as u8;
        }
        Ok(v)
    }
}

pub fn serialize_quadtree(tree: &QuadTree) -> Bitstream {
    let mut w = BitWriter::default();
    for i in tree.preorder() {
        match &tree.nodes[i] {
            Node::Split { .. } => w.push(true),
            Node::Leaf { mean, .. } => {
                w.push(false);
                w.push_u8(to_u8(*mean));
            }
        }
    }
    Bitstream { bytes: w.bytes, bit_len: w.len }
}

/// Rebuilds a tree over a `height x width` frame. Leaf means come back as
/// their 8-bit levels.
pub fn deserialize_quadtree(bytes: &[u8], height: usize, width: usize) -> Result<QuadTree> {
    if height == 0 || width == 0 {
        return Err(Error::Bitstream("empty frame dimensions".into()));
    }
    let mut r = BitReader { bytes, pos: 0 };
    let mut nodes = Vec::new();
    // (node slot, region) in preorder
    let mut stack = vec![(None::<(usize, usize)>, Region { x0: 0, y0: 0, width, height })];
    while let Some((parent, region)) = stack.pop() {
        let idx = nodes.len();
        if let Some((p, k)) = parent {
            if let Node::Split { children, .. } = &mut nodes[p] {
                children[k] = idx;
            }
        }
        if r.bit()? {
            if !region.splittable() {
                return Err(Error::Bitstream(format!(
                    "split flag on unsplittable {}x{} block",
                    region.width, region.height
                )));
            }
            nodes.push(Node::Split { region, children: [0; 4] });
            for (k, q) in region.quadrants().into_iter().enumerate().rev() {
                stack.push((Some((idx, k)), q));
            }
        } else {
            let level = r.u8()?;
            nodes.push(Node::Leaf { region, mean: level as f64 / 255.0 });
        }
    }
    let used_bytes = r.pos.div_ceil(8) as usize;
    let pad_mask = 0xffu8.checked_shr(((r.pos - 1) % 8 + 1) as u32).unwrap_or(0);
    if bytes.len() != used_bytes || bytes[used_bytes - 1] & pad_mask != 0 {
        return Err(Error::Bitstream("trailing data after tree".into()));
    }
    Ok(QuadTree { height, width, nodes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadrant_frame() -> Frame {
        Plane::from_fn(8, 8, |y, x| match (y < 4, x < 4) {
            (true, true) => 0.0,
            (true, false) => 0.25,
            (false, true) => 0.75,
            (false, false) => 1.0,
        })
    }

    #[test]
    fn uniform_frame_is_single_leaf() {
        let f = Plane::filled(8, 8, 0.5);
        let t = build_quadtree(&f, BitBudget::new(10_000).unwrap(), None).unwrap();
        assert_eq!(t.leaf_count(), 1);
        assert_eq!(t.leaves().next().unwrap().1, 0.5);
        assert_eq!(t.bit_cost(), 9);
    }

    #[test]
    fn quadrants_split_once_and_render_exactly() {
        let f = quadrant_frame();
        let t = build_quadtree(&f, BitBudget::new(37).unwrap(), None).unwrap();
        assert_eq!(t.leaf_count(), 4);
        assert_eq!(t.bit_cost(), 37);
        // a bigger budget must not add useless splits
        let t2 = build_quadtree(&f, BitBudget::new(5000).unwrap(), None).unwrap();
        assert_eq!(t2.leaf_count(), 4);
        // 0.25 and 0.75 are not 8-bit levels, so compare with quantized source
        assert_eq!(render_quadtree(&t), f.quantize8());
        assert_eq!(degrade(&f, BitBudget::new(37).unwrap(), None).unwrap(), f.quantize8());
    }

    #[test]
    fn render_single_leaf_fills_level() {
        let f = Plane::filled(4, 4, 0.5);
        let t = build_quadtree(&f, BitBudget::new(9).unwrap(), None).unwrap();
        let r = render_quadtree(&t);
        assert!(r.data().iter().all(|&v| v == 128.0 / 255.0));
    }

    #[test]
    fn budget_below_leaf_cost() {
        assert!(matches!(BitBudget::new(8), Err(Error::Budget { .. })));
    }

    #[test]
    fn serialize_single_leaf() {
        let f = Plane::filled(4, 4, 128.0 / 255.0);
        let t = build_quadtree(&f, BitBudget::new(9).unwrap(), None).unwrap();
        let s = serialize_quadtree(&t);
        assert_eq!(s.bit_len, 9);
        // 0 1000000 | 0 + padding
        assert_eq!(s.bytes, vec![0b0100_0000, 0b0000_0000]);
    }

    #[test]
    fn serialize_one_split() {
        let t = build_quadtree(&quadrant_frame(), BitBudget::new(100).unwrap(), None).unwrap();
        let s = serialize_quadtree(&t);
        assert_eq!(s.bit_len, 37);
        assert_eq!(s.bit_len, t.bit_cost());
        let back = deserialize_quadtree(&s.bytes, 8, 8).unwrap();
        assert_eq!(back, t.quantized());
    }

    #[test]
    fn deserialize_rejects_garbage() {
        // split flag on a 1x1 frame
        assert!(deserialize_quadtree(&[0x80], 1, 1).is_err());
        // truncated leaf value
        assert!(deserialize_quadtree(&[0x00], 4, 4).is_err());
        // nonzero padding
        assert!(deserialize_quadtree(&[0x40, 0x01], 4, 4).is_err());
        // extra byte
        assert!(deserialize_quadtree(&[0x40, 0x00, 0x00], 4, 4).is_err());
    }

    #[test]
    fn odd_dimensions_tile_exactly() {
        let f = Plane::from_fn(5, 7, |y, x| ((y * 7 + x) % 5) as f64 / 4.0);
        let t = build_quadtree(&f, BitBudget::new(100_000).unwrap(), None).unwrap();
        let mut cover = Plane::filled(5, 7, 0u32);
        for (r, _) in t.leaves() {
            assert!(r.area() > 0);
            for (y, x) in r.pixels() {
                cover.set(y, x, cover.get(y, x) + 1);
            }
        }
        assert!(cover.data().iter().all(|&c| c == 1));
    }

    #[test]
    fn roi_pixels_get_smaller_blocks() {
        // same texture on both halves; ROI on the left half
        let f = Plane::from_fn(32, 32, |y, x| (((x % 16) * 7 + y * 3) % 11) as f64 / 10.0);
        let roi = RoiMask::from_rects(32, 32, &[Region { x0: 0, y0: 0, width: 16, height: 32 }]);
        let t = build_quadtree(&f, BitBudget::for_splits(20), Some(&roi)).unwrap();
        let (mut ins, mut outs) = (vec![], vec![]);
        for (r, _) in t.leaves() {
            if roi.fraction(&r) == 1.0 {
                ins.push(r.area() as f64);
            } else {
                outs.push(r.area() as f64);
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&ins) <= mean(&outs), "{} vs {}", mean(&ins), mean(&outs));
    }
}
