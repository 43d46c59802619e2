//! Canonical Huffman code for a Zipf distribution truncated to `1..=N`,
//! used to send the selected candidate index.
//!
//! Both ends rebuild the same codebook from `(N, C)`, so no table is sent.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{E, LOG2_E};

use crate::error::{Error, Result};

/// `e⁻¹·log₂ e`.
pub const ZIPF_OFFSET: f64 = LOG2_E / E;

const MAX_CODE_LEN: u8 = 64;

/// Zipf exponent `s = 1 + 1/(C + e⁻¹log₂e + 1)` for rate parameter `C` in bits.
pub fn zipf_exponent(c: f64) -> f64 {
    1.0 + 1.0 / (c + ZIPF_OFFSET + 1.0)
}

/// `k^{−s}/Z_N` for `k = 1..=N`.
pub fn zipf_probabilities(n: usize, s: f64) -> Vec<f64> {
    let weights: Vec<f64> = (1..=n).map(|k| (k as f64).powf(-s)).collect();
    // sum smallest first for a platform-stable normalizer
    let z: f64 = weights.iter().rev().sum();
    weights.into_iter().map(|w| w / z).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Codeword {
    /// Code bits right-aligned, first bit sent is the most significant of `len`.
    pub bits: u64,
    pub len: u8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZipfCodebook {
    n: usize,
    s: f64,
    probabilities: Vec<f64>,
    codewords: Vec<Codeword>,
    // canonical decode tables indexed by length
    first_code: Vec<u64>,
    count: Vec<u64>,
    offset: Vec<usize>,
    symbols_by_code: Vec<usize>,
}

struct HeapNode {
    prob: f64,
    max_symbol: usize,
    id: usize,
}

impl PartialEq for HeapNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapNode {}

impl PartialOrd for HeapNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapNode {
    // reversed so the max-heap pops the lightest node, smaller max symbol first on ties
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .prob
            .total_cmp(&self.prob)
            .then_with(|| other.max_symbol.cmp(&self.max_symbol))
    }
}

impl ZipfCodebook {
    pub fn build(n: usize, c: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("codebook needs N >= 1"));
        }
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::invalid(format!(
                "rate parameter C must be finite and >= 0, got {c}"
            )));
        }
        let s = zipf_exponent(c);
        let mut book = Self::from_probabilities(zipf_probabilities(n, s))?;
        book.s = s;
        Ok(book)
    }

    /// Huffman code for arbitrary symbol probabilities (symbol `k` has `probs[k−1]`).
    pub fn from_probabilities(probs: Vec<f64>) -> Result<Self> {
        let n = probs.len();
        if n == 0 {
            return Err(Error::invalid("codebook needs at least one symbol"));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::invalid("symbol probabilities must be positive and finite"));
        }
        let lengths = huffman_lengths(&probs)?;
        let mut book = ZipfCodebook {
            n,
            s: f64::NAN,
            probabilities: probs,
            codewords: Vec::new(),
            first_code: Vec::new(),
            count: Vec::new(),
            offset: Vec::new(),
            symbols_by_code: Vec::new(),
        };
        book.assign_canonical(&lengths);
        Ok(book)
    }

    fn assign_canonical(&mut self, lengths: &[u8]) {
        let max_len = *lengths.iter().max().unwrap() as usize;
        let mut order: Vec<usize> = (0..self.n).collect();
        order.sort_by_key(|&i| (lengths[i], i));

        let mut count = vec![0u64; max_len + 1];
        for &l in lengths {
            count[l as usize] += 1;
        }
        let mut first_code = vec![0u64; max_len + 1];
        let mut offset = vec![0usize; max_len + 1];
        let mut code = 0u64;
        let mut seen = 0usize;
        for len in 1..=max_len {
            first_code[len] = code;
            offset[len] = seen;
            seen += count[len] as usize;
            code = (code + count[len]) << 1;
        }

        let mut codewords = vec![Codeword { bits: 0, len: 0 }; self.n];
        let mut next = first_code.clone();
        for &i in &order {
            let l = lengths[i] as usize;
            codewords[i] = Codeword {
                bits: next[l],
                len: lengths[i],
            };
            next[l] += 1;
        }
        self.codewords = codewords;
        self.first_code = first_code;
        self.count = count;
        self.offset = offset;
        self.symbols_by_code = order;
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Zipf exponent, NaN for codebooks built from explicit probabilities.
    pub fn exponent(&self) -> f64 {
        self.s
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Codeword of index `k` (1-based).
    pub fn codeword(&self, k: usize) -> Result<Codeword> {
        if k == 0 || k > self.n {
            return Err(Error::invalid(format!("index {k} outside 1..={}", self.n)));
        }
        Ok(self.codewords[k - 1])
    }

    pub fn codewords(&self) -> &[Codeword] {
        &self.codewords
    }

    pub fn lengths(&self) -> Vec<u8> {
        self.codewords.iter().map(|c| c.len).collect()
    }

    pub fn expected_length_bits(&self) -> f64 {
        self.probabilities
            .iter()
            .zip(&self.codewords)
            .map(|(p, c)| p * c.len as f64)
            .sum()
    }

    pub fn entropy_bits(&self) -> f64 {
        -self.probabilities.iter().map(|p| p * p.log2()).sum::<f64>()
    }

    pub fn kraft_sum(&self) -> f64 {
        self.codewords.iter().map(|c| (-(c.len as f64)).exp2()).sum()
    }

    pub fn encode_index(&self, k: usize, out: &mut BitWriter) -> Result<()> {
        let cw = self.codeword(k)?;
        out.write_bits(cw.bits, cw.len);
        Ok(())
    }

    /// Reads exactly one codeword and returns its 1-based index.
    pub fn decode_index(&self, input: &mut BitReader<'_>) -> Result<usize> {
        let mut code = 0u64;
        for len in 1..self.first_code.len() {
            let bit = input
                .read_bit()
                .ok_or_else(|| Error::Bitstream("payload ended inside a codeword".into()))?;
            code = (code << 1) | bit as u64;
            let rel = code.wrapping_sub(self.first_code[len]);
            if code >= self.first_code[len] && rel < self.count[len] {
                return Ok(self.symbols_by_code[self.offset[len] + rel as usize] + 1);
            }
        }
        Err(Error::Bitstream("bits do not match any codeword".into()))
    }
}

fn huffman_lengths(probs: &[f64]) -> Result<Vec<u8>> {
    let n = probs.len();
    if n == 1 {
        // a lone symbol still gets one bit so the payload is never empty
        return Ok(vec![1]);
    }
    // children of internal nodes; leaves are 0..n
    let mut children: Vec<(usize, usize)> = Vec::with_capacity(n - 1);
    let mut heap: BinaryHeap<HeapNode> = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| HeapNode {
            prob: p,
            max_symbol: i,
            id: i,
        })
        .collect();
    while heap.len() > 1 {
        let a = heap.pop().unwrap();
        let b = heap.pop().unwrap();
        children.push((a.id, b.id));
        heap.push(HeapNode {
            prob: a.prob + b.prob,
            max_symbol: a.max_symbol.max(b.max_symbol),
            id: n + children.len() - 1,
        });
    }
    let root = heap.pop().unwrap().id;
    let mut lengths = vec![0u8; n];
    let mut stack = vec![(root, 0u8)];
    while let Some((id, depth)) = stack.pop() {
        if id < n {
            lengths[id] = depth;
        } else {
            if depth >= MAX_CODE_LEN {
                return Err(Error::invalid("Huffman code longer than 64 bits"));
            }
            let (l, r) = children[id - n];
            stack.push((l, depth + 1));
            stack.push((r, depth + 1));
        }
    }
    Ok(lengths)
}

/// Appends bits most-significant first, zero-padding the final byte.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bit_len: usize,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write_bit(&mut self, bit: bool) {
        if self.bit_len % 8 == 0 {
            self.bytes.push(0);
        }
        if bit {
            let last = self.bytes.last_mut().unwrap();
            *last |= 0x80 >> (self.bit_len % 8);
        }
        self.bit_len += 1;
    }

    /// Writes the low `len` bits of `bits`, highest first.
    pub fn write_bits(&mut self, bits: u64, len: u8) {
        for i in (0..len).rev() {
            self.write_bit((bits >> i) & 1 == 1);
        }
    }

    pub fn bit_len(&self) -> usize {
        self.bit_len
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }
}

#[derive(Clone, Debug)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    bit_len: usize,
    pos: usize,
}

impl<'a> BitReader<'a> {
    /// Reads at most `bit_len` bits from `bytes`.
    pub fn new(bytes: &'a [u8], bit_len: usize) -> Result<Self> {
        if bit_len > bytes.len() * 8 {
            return Err(Error::Bitstream(format!(
                "{bit_len} bits declared but only {} bytes present",
                bytes.len()
            )));
        }
        Ok(BitReader { bytes, bit_len, pos: 0 })
    }

    pub fn read_bit(&mut self) -> Option<bool> {
        if self.pos >= self.bit_len {
            return None;
        }
        let bit = self.bytes[self.pos / 8] & (0x80 >> (self.pos % 8)) != 0;
        self.pos += 1;
        Some(bit)
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.bit_len - self.pos
    }
}
