//! Polynomial coding of piece messages and decoding from any `N - s` VMs.
//!
//! VM `n` is tied to the evaluation point `x_n = n` (1-based). Piece `P`
//! (computed by `r = s + m` VMs) gets `m` polynomials
//!
//! ```text
//! g_{P,j}(x) = prod_{n not in P} (x - x_n) * h_{P,j}(x),   deg h_{P,j} <= m - 1
//! ```
//!
//! with `h_{P,j}` chosen so that the coefficient of `x^(D-k)`, `D = N - s`, is
//! 1 for `k = j` and 0 for the other `k <= m`. VM `n` sends
//! `T_n = sum_{P,j} g_{P,j}(x_n) W_P^(j)`; the sum over `P` of these
//! polynomials has degree `D - 1`, so any `D` evaluations pin down its top `m`
//! coefficients, which are the `m` parts of the aggregate.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::field::PrimeField;
use super::filling::{fill, Piece};
use super::{StragglerConfig, StragglerError};
use crate::model::{ClassMask, LoadAssignment};

/// Encoding rows for a fixed set of piece VM sets.
#[derive(Debug, Clone, PartialEq)]
pub struct CodingScheme {
    field: PrimeField,
    num_vms: usize,
    stragglers: usize,
    parts: usize,
    piece_sets: Vec<ClassMask>,
    /// `rows[n][p * m + j] = g_{P_p, j}(x_n)`.
    rows: Vec<Vec<u64>>,
}

impl CodingScheme {
    pub fn new(
        config: &StragglerConfig,
        num_vms: usize,
        piece_sets: Vec<ClassMask>,
    ) -> Result<Self, StragglerError> {
        let field = config.check(num_vms)?;
        let r = config.redundancy();
        if let Some(bad) = piece_sets
            .iter()
            .find(|p| p.len() != r || p.max_member().is_some_and(|top| top >= num_vms))
        {
            return Err(StragglerError::BadPiece {
                vms: *bad,
                redundancy: r,
            });
        }
        let m = config.m;
        let d = num_vms - config.s;
        let points: Vec<u64> = (1..=num_vms as u64).collect();
        let mut rows = vec![vec![0u64; piece_sets.len() * m]; num_vms];
        for (p, set) in piece_sets.iter().enumerate() {
            // z(x) = prod over VMs outside the piece, ascending coefficients.
            let mut z = vec![1u64];
            for n in (0..num_vms).filter(|&n| !set.contains(n)) {
                let mut next = vec![0u64; z.len() + 1];
                for (i, &c) in z.iter().enumerate() {
                    next[i + 1] = field.add(next[i + 1], c);
                    next[i] = field.sub(next[i], field.mul(c, points[n]));
                }
                z = next;
            }
            let z_at = |i: isize| -> u64 {
                if i >= 0 && (i as usize) < z.len() {
                    z[i as usize]
                } else {
                    0
                }
            };
            for j in 1..=m {
                let mut h = vec![0u64; m];
                for k in 1..=m {
                    let mut acc = u64::from(j == k);
                    for t in (m - k + 1)..m {
                        let idx = d as isize - k as isize - t as isize;
                        acc = field.sub(acc, field.mul(h[t], z_at(idx)));
                    }
                    h[m - k] = acc;
                }
                for n in 0..num_vms {
                    let x = points[n];
                    let value = field.mul(eval(field, &z, x), eval(field, &h, x));
                    rows[n][p * m + (j - 1)] = value;
                }
            }
        }
        Ok(CodingScheme {
            field,
            num_vms,
            stragglers: config.s,
            parts: m,
            piece_sets,
            rows,
        })
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }

    pub fn piece_sets(&self) -> &[ClassMask] {
        &self.piece_sets
    }

    pub fn row(&self, vm: usize) -> &[u64] {
        &self.rows[vm]
    }

    pub fn num_vms(&self) -> usize {
        self.num_vms
    }

    /// Encodes one VM's transmission from the per-piece-set messages, each of
    /// length `L` with `L` divisible by `m`.
    pub fn encode_vm(
        &self,
        vm: usize,
        messages: &[Vec<u64>],
    ) -> Result<CodedTransmission, StragglerError> {
        let part_len = self.part_length(messages)?;
        let f = self.field;
        let row = &self.rows[vm];
        let mut coded = vec![0u64; part_len];
        for (p, msg) in messages.iter().enumerate() {
            for j in 0..self.parts {
                let c = row[p * self.parts + j];
                if c == 0 {
                    continue;
                }
                let part = &msg[j * part_len..(j + 1) * part_len];
                for (out, &w) in coded.iter_mut().zip(part) {
                    *out = f.add(*out, f.mul(c, f.reduce(w)));
                }
            }
        }
        Ok(CodedTransmission {
            vm_index: vm,
            coded_vector: coded,
            encoding_row: row.clone(),
        })
    }

    fn part_length(&self, messages: &[Vec<u64>]) -> Result<usize, StragglerError> {
        if messages.len() != self.piece_sets.len() {
            return Err(StragglerError::MessageCount {
                expected: self.piece_sets.len(),
                found: messages.len(),
            });
        }
        let len = messages.first().map_or(0, Vec::len);
        if messages.iter().any(|m| m.len() != len) || !len.is_multiple_of(self.parts) {
            return Err(StragglerError::MessageLength {
                length: len,
                m: self.parts,
            });
        }
        Ok(len / self.parts)
    }

    pub fn encode_all(
        &self,
        messages: &[Vec<u64>],
    ) -> Result<Vec<CodedTransmission>, StragglerError> {
        crate::exec::map_range(self.num_vms, |vm| self.encode_vm(vm, messages))
            .into_iter()
            .collect()
    }

    /// Rebuilds a transmission received over the wire.
    pub fn attach(&self, wire: WireTransmission) -> Result<CodedTransmission, StragglerError> {
        if wire.vm_index >= self.num_vms || wire.modulus != self.field.modulus() {
            return Err(StragglerError::Wire(format!(
                "transmission from VM index {} with modulus {} does not belong to this scheme",
                wire.vm_index, wire.modulus
            )));
        }
        Ok(CodedTransmission {
            vm_index: wire.vm_index,
            coded_vector: wire.coded_vector,
            encoding_row: self.rows[wire.vm_index].clone(),
        })
    }

    /// Minimum number of responses needed.
    pub fn threshold(&self) -> usize {
        self.num_vms - self.stragglers
    }
}

fn eval(f: PrimeField, coeffs: &[u64], x: u64) -> u64 {
    coeffs
        .iter()
        .rev()
        .fold(0, |acc, &c| f.add(f.mul(acc, x), c))
}

/// What VM `vm_index` (0-based) sends: `L / m` field elements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedTransmission {
    pub vm_index: usize,
    pub coded_vector: Vec<u64>,
    /// Coefficient of each `(piece set, part)` column, pieces major.
    pub encoding_row: Vec<u64>,
}

impl CodedTransmission {
    /// Recomputes the coded vector from the piece messages.
    pub fn matches(&self, field: PrimeField, messages: &[Vec<u64>], parts: usize) -> bool {
        let len = self.coded_vector.len();
        let mut expect = vec![0u64; len];
        for (p, msg) in messages.iter().enumerate() {
            for j in 0..parts {
                let c = self.encoding_row.get(p * parts + j).copied().unwrap_or(0);
                for (i, e) in expect.iter_mut().enumerate() {
                    let w = field.reduce(msg[j * len + i]);
                    *e = field.add(*e, field.mul(c, w));
                }
            }
        }
        expect == self.coded_vector
    }

    /// Header `{vmIndex: u32, partLength: u64, modulus: u64}` then the
    /// elements, all little-endian.
    pub fn to_bytes(&self, modulus: u64) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 8 * self.coded_vector.len());
        out.extend_from_slice(&(self.vm_index as u32).to_le_bytes());
        out.extend_from_slice(&(self.coded_vector.len() as u64).to_le_bytes());
        out.extend_from_slice(&modulus.to_le_bytes());
        for v in &self.coded_vector {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }
}

/// A transmission as read from bytes, before its encoding row is known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireTransmission {
    pub vm_index: usize,
    pub modulus: u64,
    pub coded_vector: Vec<u64>,
}

pub const HEADER_LEN: usize = 20;

/// Reads one transmission and returns it with the bytes it used.
pub fn read_transmission(bytes: &[u8]) -> Result<(WireTransmission, usize), StragglerError> {
    let short = || StragglerError::Wire(format!("truncated transmission ({} bytes)", bytes.len()));
    if bytes.len() < HEADER_LEN {
        return Err(short());
    }
    let vm_index = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let part_len = u64::from_le_bytes(bytes[4..12].try_into().unwrap());
    let modulus = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let body = usize::try_from(part_len)
        .ok()
        .and_then(|l| l.checked_mul(8))
        .ok_or_else(short)?;
    let end = HEADER_LEN.checked_add(body).ok_or_else(short)?;
    if bytes.len() < end {
        return Err(short());
    }
    let coded_vector = bytes[HEADER_LEN..end]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((
        WireTransmission {
            vm_index,
            modulus,
            coded_vector,
        },
        end,
    ))
}

/// Reads back-to-back transmissions until the input is exhausted.
pub fn read_all(mut bytes: &[u8]) -> Result<Vec<WireTransmission>, StragglerError> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        let (t, used) = read_transmission(bytes)?;
        out.push(t);
        bytes = &bytes[used..];
    }
    Ok(out)
}

/// Recovers the aggregate `sum_P W_P` (all `m` parts concatenated) from at
/// least `N - s` transmissions.
pub fn decode(
    received: &[CodedTransmission],
    config: &StragglerConfig,
    total_vms: usize,
) -> Result<Vec<u64>, StragglerError> {
    let field = config.check(total_vms)?;
    let need = total_vms - config.s;
    let mut seen = ClassMask(0);
    for t in received {
        if t.vm_index >= total_vms || seen.contains(t.vm_index) {
            return Err(StragglerError::DuplicateResponse { vm: t.vm_index });
        }
        seen = ClassMask(seen.0 | ClassMask::single(t.vm_index).0);
    }
    if received.len() < need {
        return Err(StragglerError::InsufficientResponses {
            received: received.len(),
            needed: need,
        });
    }
    let m = config.m;
    let cols = received.first().map_or(0, |t| t.encoding_row.len());
    let part_len = received.first().map_or(0, |t| t.coded_vector.len());
    if received
        .iter()
        .any(|t| t.encoding_row.len() != cols || t.coded_vector.len() != part_len)
        || !cols.is_multiple_of(m)
    {
        return Err(StragglerError::Wire(
            "transmissions disagree in shape".into(),
        ));
    }
    let mut out = Vec::with_capacity(part_len * m);
    for k in 0..m {
        let target: Vec<u64> = (0..cols).map(|c| u64::from(c % m == k)).collect();
        let weights = solve_combination(field, received, &target)?;
        let mut part = vec![0u64; part_len];
        for (w, t) in weights.iter().zip(received) {
            if *w == 0 {
                continue;
            }
            for (o, &v) in part.iter_mut().zip(&t.coded_vector) {
                *o = field.add(*o, field.mul(*w, v));
            }
        }
        out.extend(part);
    }
    Ok(out)
}

/// Weights `w` with `sum_i w_i row_i = target`.
fn solve_combination(
    f: PrimeField,
    received: &[CodedTransmission],
    target: &[u64],
) -> Result<Vec<u64>, StragglerError> {
    let unknowns = received.len();
    // One equation per column; augmented with the target.
    let mut a: Vec<Vec<u64>> = target
        .iter()
        .enumerate()
        .map(|(c, &rhs)| {
            let mut eq: Vec<u64> = received.iter().map(|t| t.encoding_row[c]).collect();
            eq.push(rhs);
            eq
        })
        .collect();
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..unknowns {
        let Some(p) = (row..a.len()).find(|&i| a[i][col] != 0) else {
            continue;
        };
        a.swap(row, p);
        let inv = f.inv(a[row][col]);
        for v in a[row].iter_mut() {
            *v = f.mul(*v, inv);
        }
        for i in 0..a.len() {
            if i != row && a[i][col] != 0 {
                let factor = a[i][col];
                for c in 0..=unknowns {
                    let sub = f.mul(factor, a[row][c]);
                    a[i][c] = f.sub(a[i][c], sub);
                }
            }
        }
        pivots.push(col);
        row += 1;
        if row == a.len() {
            break;
        }
    }
    if a[row..].iter().any(|eq| eq[unknowns] != 0) {
        return Err(StragglerError::Singular);
    }
    let mut w = vec![0u64; unknowns];
    for (r, &col) in pivots.iter().enumerate() {
        w[col] = a[r][unknowns];
    }
    Ok(w)
}

/// Everything produced by [`encode`].
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    pub scheme: CodingScheme,
    pub pieces: Vec<Piece>,
    /// Message of each piece set, aligned with `scheme.piece_sets()`.
    pub piece_messages: Vec<Vec<u64>>,
    pub transmissions: Vec<CodedTransmission>,
    /// In-scope classes in the aggregate.
    pub classes: Vec<ClassMask>,
}

impl Encoding {
    /// `sum_V W_V` over in-scope classes, computed directly.
    pub fn direct_aggregate(&self) -> Vec<u64> {
        let f = self.scheme.field();
        let len = self.piece_messages.first().map_or(0, Vec::len);
        let mut out = vec![0u64; len];
        for msg in &self.piece_messages {
            for (o, &v) in out.iter_mut().zip(msg) {
                *o = f.add(*o, f.reduce(v));
            }
        }
        out
    }
}

/// Splits each in-scope class message over that class's pieces and encodes.
///
/// A class's message is the sum of its datasets' messages; how that sum
/// divides among pieces depends on which datasets each piece holds, which the
/// caller does not pass. The split used here is a seeded random additive one,
/// so the pieces of a class always add back to its message.
pub fn encode(
    assignment: &LoadAssignment,
    config: &StragglerConfig,
    messages: &BTreeMap<ClassMask, Vec<u64>>,
    seed: u64,
) -> Result<Encoding, StragglerError> {
    let field = config.check(assignment.num_vms())?;
    let r = config.redundancy();
    if assignment.redundancy() != r {
        return Err(StragglerError::Redundancy {
            expected: r,
            found: assignment.redundancy(),
        });
    }
    let r_ratio = crate::ratio::Ratio::from_integer(r.into());
    let mut sizes: BTreeMap<ClassMask, crate::ratio::Ratio> = BTreeMap::new();
    for (_, class, _) in assignment.entries() {
        if class.len() >= r && !sizes.contains_key(&class) {
            sizes.insert(class, assignment.class_total(class) / &r_ratio);
        }
    }
    let pieces = fill(assignment, sizes.iter().map(|(c, a)| (*c, a)))?;
    let classes: Vec<ClassMask> = sizes.keys().copied().collect();

    let len = match classes.first() {
        Some(c) => messages
            .get(c)
            .ok_or(StragglerError::MissingMessage { class: *c })?
            .len(),
        None => messages.values().next().map_or(0, Vec::len),
    };
    let mut piece_sets: Vec<ClassMask> = Vec::new();
    let mut piece_messages: Vec<Vec<u64>> = Vec::new();
    for class in &classes {
        let msg = messages
            .get(class)
            .ok_or(StragglerError::MissingMessage { class: *class })?;
        if msg.len() != len {
            return Err(StragglerError::MessageLength {
                length: msg.len(),
                m: config.m,
            });
        }
        let own: Vec<&Piece> = pieces.iter().filter(|p| p.class == *class).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(class.0 as u64);
        let mut remaining: Vec<u64> = msg.iter().map(|&v| field.reduce(v)).collect();
        for (i, piece) in own.iter().enumerate() {
            let share: Vec<u64> = if i + 1 == own.len() {
                remaining.clone()
            } else {
                let s: Vec<u64> = (0..len)
                    .map(|_| rng.random_range(0..field.modulus()))
                    .collect();
                for (r, v) in remaining.iter_mut().zip(&s) {
                    *r = field.sub(*r, *v);
                }
                s
            };
            let slot = match piece_sets.iter().position(|s| *s == piece.vms) {
                Some(p) => p,
                None => {
                    piece_sets.push(piece.vms);
                    piece_messages.push(vec![0u64; len]);
                    piece_sets.len() - 1
                }
            };
            for (o, v) in piece_messages[slot].iter_mut().zip(share) {
                *o = field.add(*o, v);
            }
        }
    }
    let scheme = CodingScheme::new(config, assignment.num_vms(), piece_sets)?;
    let transmissions = scheme.encode_all(&piece_messages)?;
    Ok(Encoding {
        scheme,
        pieces,
        piece_messages,
        transmissions,
        classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::straggler::field::DEFAULT_MODULUS;

    fn field() -> PrimeField {
        PrimeField::new(DEFAULT_MODULUS).unwrap()
    }

    fn transmission(
        vm: usize,
        coeffs: &[i64],
        messages: &[Vec<u64>],
        parts: usize,
    ) -> CodedTransmission {
        let f = field();
        let row: Vec<u64> = coeffs.iter().map(|&c| f.from_i64(c)).collect();
        let len = messages[0].len() / parts;
        let mut coded = vec![0u64; len];
        for (p, msg) in messages.iter().enumerate() {
            for j in 0..parts {
                for (i, o) in coded.iter_mut().enumerate() {
                    *o = f.add(*o, f.mul(row[p * parts + j], msg[j * len + i]));
                }
            }
        }
        CodedTransmission {
            vm_index: vm,
            coded_vector: coded,
            encoding_row: row,
        }
    }

    fn combine(ts: &[(&CodedTransmission, u64)]) -> Vec<u64> {
        let f = field();
        let mut out = vec![0u64; ts[0].0.coded_vector.len()];
        for (t, w) in ts {
            for (o, &v) in out.iter_mut().zip(&t.coded_vector) {
                *o = f.add(*o, f.mul(*w, v));
            }
        }
        out
    }

    #[test]
    fn three_vm_transmissions_from_any_two() {
        let f = field();
        let half = f.inv(2);
        // Columns W_{12}, W_{13}, W_{23}, W_{123}; coefficients scaled by 2.
        let w: Vec<Vec<u64>> = vec![vec![11, 7], vec![5, 300], vec![40, 2], vec![9, 1]];
        let scale = |t: CodedTransmission, k: u64| CodedTransmission {
            coded_vector: t.coded_vector.iter().map(|&v| f.mul(v, k)).collect(),
            encoding_row: t.encoding_row.iter().map(|&v| f.mul(v, k)).collect(),
            ..t
        };
        let t1 = scale(transmission(0, &[1, 2, 0, 0], &w, 1), half);
        let t2 = scale(transmission(1, &[1, 0, 2, 2], &w, 1), half);
        let t3 = transmission(2, &[0, 1, -1, -1], &w, 1);
        let total: Vec<u64> = (0..2)
            .map(|i| w.iter().fold(0, |a, m| f.add(a, m[i])))
            .collect();
        assert_eq!(combine(&[(&t1, 1), (&t2, 1)]), total);
        assert_eq!(combine(&[(&t2, 2), (&t3, 1)]), total);
        assert_eq!(combine(&[(&t1, 2), (&t3, f.from_i64(-1))]), total);
        let cfg = StragglerConfig::new(1, 1);
        for pair in [[&t1, &t2], [&t1, &t3], [&t2, &t3]] {
            let got: Vec<CodedTransmission> = pair.iter().map(|t| (*t).clone()).collect();
            assert_eq!(decode(&got, &cfg, 3).unwrap(), total);
        }
    }

    #[test]
    fn four_vm_decode_combination() {
        let f = field();
        // Columns (class, part): 123, 124, 134, 234, 1234, each with parts 1 and 2.
        let t1 = [-3, -1, -2, -2, -1, 1, 0, 0, 0, 0];
        let t2 = [-2, -2, -1, -3, 0, 0, 1, -1, 1, -1];
        let t3 = [-1, 1, 0, 0, 1, 3, 2, 2, 2, 2];
        let w: Vec<Vec<u64>> = (0..5u64)
            .map(|c| (0..4).map(|i| 17 * c + i * i + 3).collect())
            .collect();
        let [t1, t2, t3] = [t1, t2, t3]
            .iter()
            .enumerate()
            .map(|(vm, r)| transmission(vm, r, &w, 2))
            .collect::<Vec<_>>()
            .try_into()
            .unwrap();
        let quarter = f.inv(4);
        let half = f.inv(2);
        let part = |j: usize| -> Vec<u64> {
            (0..2)
                .map(|i| w.iter().fold(0, |a, m| f.add(a, m[j * 2 + i])))
                .collect()
        };
        let first = combine(&[(&t3, quarter), (&t1, f.neg(f.mul(3, quarter))), (&t2, half)]);
        let second = combine(&[(&t3, quarter), (&t1, quarter), (&t2, f.neg(half))]);
        assert_eq!(first, part(0));
        assert_eq!(second, part(1));
        let decoded = decode(&[t1, t2, t3], &StragglerConfig::new(1, 2), 4).unwrap();
        assert_eq!(decoded, [part(0), part(1)].concat());
    }

    #[test]
    fn generic_scheme_decodes_from_every_survivor_set() {
        for n in 1..=5usize {
            for s in 0..n.min(3) {
                for m in 1..=2usize {
                    let r = s + m;
                    if r > n {
                        continue;
                    }
                    let cfg = StragglerConfig::new(s, m);
                    let sets: Vec<ClassMask> = ClassMask::all(n).filter(|c| c.len() == r).collect();
                    let msgs: Vec<Vec<u64>> = (0..sets.len())
                        .map(|p| {
                            (0..2 * m as u64)
                                .map(|i| 1000 * p as u64 + 7 * i + 1)
                                .collect()
                        })
                        .collect();
                    let scheme = CodingScheme::new(&cfg, n, sets.clone()).unwrap();
                    let ts = scheme.encode_all(&msgs).unwrap();
                    let f = scheme.field();
                    let expect: Vec<u64> = (0..2 * m)
                        .map(|i| msgs.iter().fold(0, |a, v| f.add(a, v[i])))
                        .collect();
                    for (vm, t) in ts.iter().enumerate() {
                        assert!(t.matches(f, &msgs, m));
                        for (p, set) in sets.iter().enumerate() {
                            if !set.contains(vm) {
                                assert!(t.encoding_row[p * m..(p + 1) * m].iter().all(|&c| c == 0));
                            }
                        }
                    }
                    for keep in ClassMask::all(n).filter(|c| c.len() == n - s) {
                        let got: Vec<CodedTransmission> =
                            keep.members().map(|v| ts[v].clone()).collect();
                        assert_eq!(decode(&got, &cfg, n).unwrap(), expect, "n={n} s={s} m={m}");
                    }
                }
            }
        }
    }

    #[test]
    fn full_replication_sends_the_message() {
        let cfg = StragglerConfig::new(2, 1);
        let scheme = CodingScheme::new(&cfg, 3, vec![ClassMask(0b111)]).unwrap();
        let msg = vec![vec![4u64, 5, 6]];
        for t in scheme.encode_all(&msg).unwrap() {
            assert_eq!(t.coded_vector, msg[0]);
        }
    }

    #[test]
    fn wire_round_trip() {
        let cfg = StragglerConfig::new(1, 1);
        let scheme = CodingScheme::new(&cfg, 3, vec![ClassMask(0b011), ClassMask(0b110)]).unwrap();
        let ts = scheme.encode_all(&[vec![1, 2], vec![3, 4]]).unwrap();
        let bytes: Vec<u8> = ts
            .iter()
            .flat_map(|t| t.to_bytes(DEFAULT_MODULUS))
            .collect();
        assert_eq!(bytes.len(), 3 * (HEADER_LEN + 16));
        assert_eq!(&bytes[0..4], &0u32.to_le_bytes());
        assert_eq!(&bytes[4..12], &2u64.to_le_bytes());
        let wire = read_all(&bytes).unwrap();
        let back: Vec<CodedTransmission> = wire
            .into_iter()
            .map(|w| scheme.attach(w).unwrap())
            .collect();
        assert_eq!(back, ts);
        assert!(read_all(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn rejects_bad_shapes() {
        let cfg = StragglerConfig::new(0, 2);
        let scheme = CodingScheme::new(&cfg, 2, vec![ClassMask(0b11)]).unwrap();
        assert!(matches!(
            scheme.encode_all(&[vec![1, 2, 3]]),
            Err(StragglerError::MessageLength { .. })
        ));
        assert!(matches!(
            CodingScheme::new(&cfg, 2, vec![ClassMask(0b01)]),
            Err(StragglerError::BadPiece { .. })
        ));
        let ts = scheme.encode_all(&[vec![1, 2]]).unwrap();
        let dup = vec![ts[0].clone(), ts[0].clone()];
        assert!(matches!(
            decode(&dup, &cfg, 2),
            Err(StragglerError::DuplicateResponse { .. })
        ));
    }
}
