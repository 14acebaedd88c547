use super::config::RegisterRouting;

/// Token layout `[CLS, registers…, patches…]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenPartition {
    pub num_registers: usize,
    pub num_patches: usize,
}

impl TokenPartition {
    pub fn new(num_registers: usize, num_patches: usize) -> Self {
        Self {
            num_registers,
            num_patches,
        }
    }

    pub fn num_tokens(&self) -> usize {
        1 + self.num_registers + self.num_patches
    }

    pub fn cls_index(&self) -> usize {
        0
    }

    pub fn register_indices(&self) -> std::ops::Range<usize> {
        1..1 + self.num_registers
    }

    pub fn patch_indices(&self) -> std::ops::Range<usize> {
        1 + self.num_registers..self.num_tokens()
    }

    /// Rows taking the CLS path and rows taking the patch path.
    pub fn route(&self, routing: RegisterRouting) -> Route {
        let regs = self.register_indices();
        let (cls_rows, patch_rows) = match routing {
            RegisterRouting::WithCls => (
                std::iter::once(0).chain(regs).collect(),
                self.patch_indices().collect(),
            ),
            RegisterRouting::WithPatches => (vec![0], regs.chain(self.patch_indices()).collect()),
        };
        Route {
            cls_rows,
            patch_rows,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    pub cls_rows: Vec<usize>,
    pub patch_rows: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indices_tile_the_sequence() {
        let p = TokenPartition::new(2, 4);
        assert_eq!(p.num_tokens(), 7);
        let r = p.route(RegisterRouting::WithCls);
        assert_eq!(r.cls_rows, vec![0, 1, 2]);
        assert_eq!(r.patch_rows, vec![3, 4, 5, 6]);
        let r = p.route(RegisterRouting::WithPatches);
        assert_eq!(r.cls_rows, vec![0]);
        assert_eq!(r.patch_rows, vec![1, 2, 3, 4, 5, 6]);
        let mut all: Vec<usize> = r.cls_rows.iter().chain(&r.patch_rows).copied().collect();
        all.sort();
        assert_eq!(all, (0..7).collect::<Vec<_>>());
    }
}
