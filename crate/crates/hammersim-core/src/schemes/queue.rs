use serde::Serialize;

/// Top-K table of `(row, count)` pairs ordered by count.
///
/// Ties between equal counts keep the lower row index. Linear scans are
/// fine here: K is 20 or less in every configuration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PriorityQueue {
    capacity: usize,
    entries: Vec<(u32, u16)>,
}

// `a` ranks above `b`.
fn outranks(a: (u32, u16), b: (u32, u16)) -> bool {
    a.1 > b.1 || (a.1 == b.1 && a.0 < b.0)
}

impl PriorityQueue {
    /// Empty queue holding at most `capacity` rows.
    pub fn new(capacity: usize) -> Self {
        Self { capacity, entries: Vec::with_capacity(capacity) }
    }

    /// Maximum number of entries.
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Current number of entries.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// True when no rows are tracked.
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Tracked count of `row`, if present.
    pub fn get(&self, row: u32) -> Option<u16> {
        self.entries.iter().find(|e| e.0 == row).map(|e| e.1)
    }

    /// Insert or update `row`; returns the evicted row, if any.
    ///
    /// A count of zero removes the row (a reset row is no longer a candidate).
    pub fn insert_or_update(&mut self, row: u32, count: u16) -> Option<u32> {
        if let Some(i) = self.entries.iter().position(|e| e.0 == row) {
            if count == 0 {
                self.entries.swap_remove(i);
            } else {
                self.entries[i].1 = count;
            }
            return None;
        }
        if count == 0 || self.capacity == 0 {
            return None;
        }
        if self.entries.len() < self.capacity {
            self.entries.push((row, count));
            return None;
        }
        let (mi, min) = self.min_entry()?;
        if outranks((row, count), min) {
            self.entries[mi] = (row, count);
            Some(min.0)
        } else {
            None
        }
    }

    fn min_entry(&self) -> Option<(usize, (u32, u16))> {
        self.entries
            .iter()
            .copied()
            .enumerate()
            .reduce(|lo, cur| if outranks(lo.1, cur.1) { cur } else { lo })
    }

    /// Highest-ranked entry.
    pub fn peek(&self) -> Option<(u32, u16)> {
        self.entries.iter().copied().reduce(|a, b| if outranks(b, a) { b } else { a })
    }

    /// Largest tracked count (0 when empty).
    pub fn max_count(&self) -> u16 {
        self.peek().map_or(0, |e| e.1)
    }

    /// Smallest tracked count (0 when empty).
    pub fn min_count(&self) -> u16 {
        self.min_entry().map_or(0, |(_, e)| e.1)
    }

    /// Remove and return the highest-ranked entry.
    pub fn pop(&mut self) -> Option<(u32, u16)> {
        let top = self.peek()?;
        self.remove(top.0);
        Some(top)
    }

    /// Drop `row` if tracked.
    pub fn remove(&mut self, row: u32) {
        if let Some(i) = self.entries.iter().position(|e| e.0 == row) {
            self.entries.swap_remove(i);
        }
    }

    /// Entries in rank order.
    pub fn sorted(&self) -> Vec<(u32, u16)> {
        let mut v = self.entries.clone();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }
}
