use std::collections::VecDeque;

/// Fixed-depth transport delay. A view at tick `t` returns the payload that
/// was pushed at tick `t - depth`, or the oldest payload while the line is
/// still filling up.
#[derive(Debug, Clone)]
pub struct DelayLine<T> {
    depth: usize,
    queue: VecDeque<(usize, T)>,
}

impl<T> DelayLine<T> {
    pub fn new(depth: usize) -> Self {
        Self {
            depth,
            queue: VecDeque::with_capacity(depth + 1),
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Enqueues the payload produced at `tick`. Ticks must be pushed in
    /// increasing order.
    pub fn push(&mut self, tick: usize, payload: T) {
        debug_assert!(self.queue.back().is_none_or(|(t, _)| *t < tick));
        self.queue.push_back((tick, payload));
        while self.queue.len() > self.depth + 1 {
            self.queue.pop_front();
        }
    }

    /// Payload visible at `tick` together with the tick it was produced at.
    pub fn delayed_view(&self, tick: usize) -> Option<(usize, &T)> {
        let wanted = tick.saturating_sub(self.depth);
        self.queue
            .iter()
            .rev()
            .find(|(t, _)| *t <= wanted)
            .or_else(|| self.queue.front())
            .map(|(t, p)| (*t, p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_depth_is_current() {
        let mut line = DelayLine::new(0);
        for t in 0..5 {
            line.push(t, t * 10);
            assert_eq!(line.delayed_view(t), Some((t, &(t * 10))));
        }
        assert_eq!(line.len(), 1);
    }

    #[test]
    fn constant_stream_stays_constant() {
        let mut line = DelayLine::new(2);
        for t in 0..10 {
            line.push(t, 7.5);
            assert_eq!(line.delayed_view(t).map(|(_, p)| *p), Some(7.5));
        }
    }

    #[test]
    fn ramp_lags_by_depth() {
        let mut line = DelayLine::new(1);
        line.push(0, 0usize);
        assert_eq!(line.delayed_view(0), Some((0, &0)));
        for t in 1..20 {
            line.push(t, t);
            assert_eq!(line.delayed_view(t), Some((t - 1, &(t - 1))));
            assert_eq!(line.len(), 2);
        }
    }

    #[test]
    fn warm_up_returns_oldest() {
        let mut line = DelayLine::new(3);
        line.push(0, 'a');
        line.push(1, 'b');
        assert_eq!(line.delayed_view(1), Some((0, &'a')));
        assert!(DelayLine::<u8>::new(2).delayed_view(4).is_none());
    }
}
