//! Word-level encoding of everything that travels between machines.
//!
//! One `u64` slot stands for one model word. A record's charged size is the
//! number of slots its encoding produces, so telemetry and serialization
//! cannot drift apart.

use super::SimError;

pub trait Record: Sized {
    fn words(&self) -> usize;
    fn encode(&self, out: &mut Vec<u64>);
    fn decode(input: &mut &[u64]) -> Option<Self>;
}

fn take(input: &mut &[u64]) -> Option<u64> {
    let (&first, rest) = input.split_first()?;
    *input = rest;
    Some(first)
}

impl Record for u64 {
    fn words(&self) -> usize {
        1
    }
    fn encode(&self, out: &mut Vec<u64>) {
        out.push(*self);
    }
    fn decode(input: &mut &[u64]) -> Option<Self> {
        take(input)
    }
}

impl Record for u32 {
    fn words(&self) -> usize {
        1
    }
    fn encode(&self, out: &mut Vec<u64>) {
        out.push(*self as u64);
    }
    fn decode(input: &mut &[u64]) -> Option<Self> {
        take(input).and_then(|w| u32::try_from(w).ok())
    }
}

impl Record for i64 {
    fn words(&self) -> usize {
        1
    }
    fn encode(&self, out: &mut Vec<u64>) {
        out.push(*self as u64);
    }
    fn decode(input: &mut &[u64]) -> Option<Self> {
        take(input).map(|w| w as i64)
    }
}

impl Record for bool {
    fn words(&self) -> usize {
        1
    }
    fn encode(&self, out: &mut Vec<u64>) {
        out.push(*self as u64);
    }
    fn decode(input: &mut &[u64]) -> Option<Self> {
        match take(input)? {
            0 => Some(false),
            1 => Some(true),
            _ => None,
        }
    }
}

impl Record for () {
    fn words(&self) -> usize {
        0
    }
    fn encode(&self, _out: &mut Vec<u64>) {}
    fn decode(_input: &mut &[u64]) -> Option<Self> {
        Some(())
    }
}

impl<A: Record, B: Record> Record for (A, B) {
    fn words(&self) -> usize {
        self.0.words() + self.1.words()
    }
    fn encode(&self, out: &mut Vec<u64>) {
        self.0.encode(out);
        self.1.encode(out);
    }
    fn decode(input: &mut &[u64]) -> Option<Self> {
        Some((A::decode(input)?, B::decode(input)?))
    }
}

impl<A: Record, B: Record, C: Record> Record for (A, B, C) {
    fn words(&self) -> usize {
        self.0.words() + self.1.words() + self.2.words()
    }
    fn encode(&self, out: &mut Vec<u64>) {
        self.0.encode(out);
        self.1.encode(out);
        self.2.encode(out);
    }
    fn decode(input: &mut &[u64]) -> Option<Self> {
        Some((A::decode(input)?, B::decode(input)?, C::decode(input)?))
    }
}

/// Length-prefixed list.
impl<T: Record> Record for Vec<T> {
    fn words(&self) -> usize {
        1 + self.iter().map(Record::words).sum::<usize>()
    }
    fn encode(&self, out: &mut Vec<u64>) {
        out.push(self.len() as u64);
        for x in self {
            x.encode(out);
        }
    }
    fn decode(input: &mut &[u64]) -> Option<Self> {
        let len = take(input)? as usize;
        if len > input.len() {
            return None;
        }
        (0..len).map(|_| T::decode(input)).collect()
    }
}

pub fn encode_all<T: Record>(items: &[T]) -> Vec<u64> {
    let mut out = Vec::with_capacity(items.iter().map(Record::words).sum());
    for x in items {
        x.encode(&mut out);
    }
    out
}

pub fn decode_all<T: Record>(mut words: &[u64]) -> Result<Vec<T>, SimError> {
    let mut out = Vec::new();
    while !words.is_empty() {
        let before = words.len();
        match T::decode(&mut words) {
            Some(x) => out.push(x),
            None => {
                return Err(SimError::Decode(format!(
                    "{} at offset -{before}",
                    std::any::type_name::<T>()
                )))
            }
        }
    }
    Ok(out)
}

pub fn words_of<T: Record>(items: &[T]) -> usize {
    items.iter().map(Record::words).sum()
}
