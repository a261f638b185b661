//! Intrusive doubly linked list over content ids, with O(1) removal.

const NIL: usize = usize::MAX;

#[derive(Debug, Clone, Default)]
pub(crate) struct IdList {
    prev: Vec<usize>,
    next: Vec<usize>,
    member: Vec<bool>,
    head: usize,
    tail: usize,
    len: usize,
}

impl IdList {
    pub(crate) fn new() -> Self {
        Self {
            head: NIL,
            tail: NIL,
            ..Default::default()
        }
    }

    fn ensure(&mut self, id: usize) {
        if id >= self.member.len() {
            self.prev.resize(id + 1, NIL);
            self.next.resize(id + 1, NIL);
            self.member.resize(id + 1, false);
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.len
    }

    pub(crate) fn contains(&self, id: usize) -> bool {
        self.member.get(id).copied().unwrap_or(false)
    }

    pub(crate) fn push_front(&mut self, id: usize) {
        self.ensure(id);
        debug_assert!(!self.member[id]);
        self.member[id] = true;
        self.prev[id] = NIL;
        self.next[id] = self.head;
        if self.head != NIL {
            self.prev[self.head] = id;
        } else {
            self.tail = id;
        }
        self.head = id;
        self.len += 1;
    }

    pub(crate) fn remove(&mut self, id: usize) {
        debug_assert!(self.contains(id));
        let (p, n) = (self.prev[id], self.next[id]);
        if p != NIL {
            self.next[p] = n;
        } else {
            self.head = n;
        }
        if n != NIL {
            self.prev[n] = p;
        } else {
            self.tail = p;
        }
        self.member[id] = false;
        self.len -= 1;
    }

    pub(crate) fn move_to_front(&mut self, id: usize) {
        self.remove(id);
        self.push_front(id);
    }

    pub(crate) fn pop_back(&mut self) -> Option<usize> {
        if self.tail == NIL {
            return None;
        }
        let id = self.tail;
        self.remove(id);
        Some(id)
    }

    /// Ids from front (most recent) to back.
    pub(crate) fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        let mut cur = self.head;
        std::iter::from_fn(move || {
            if cur == NIL {
                return None;
            }
            let id = cur;
            cur = self.next[id];
            Some(id)
        })
    }
}
