/// Entry in the global function registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FunctionSpec {
    pub name: &'static str,
    pub spatial: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(usize)]
pub enum FunctionId {
    NoOp = 0,
    SelectAll = 1,
    SelectUnit1 = 2,
    SelectUnit2 = 3,
    MoveScreen = 4,
    AttackScreen = 5,
    MoveCamera = 6,
}

impl FunctionId {
    pub const ALL: [FunctionId; NUM_FUNCTIONS] = [
        FunctionId::NoOp,
        FunctionId::SelectAll,
        FunctionId::SelectUnit1,
        FunctionId::SelectUnit2,
        FunctionId::MoveScreen,
        FunctionId::AttackScreen,
        FunctionId::MoveCamera,
    ];

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn spec(self) -> FunctionSpec {
        REGISTRY[self as usize]
    }
}

pub const NUM_FUNCTIONS: usize = 7;

const REGISTRY: [FunctionSpec; NUM_FUNCTIONS] = [
    FunctionSpec {
        name: "no_op",
        spatial: false,
    },
    FunctionSpec {
        name: "select_all",
        spatial: false,
    },
    FunctionSpec {
        name: "select_unit_1",
        spatial: false,
    },
    FunctionSpec {
        name: "select_unit_2",
        spatial: false,
    },
    FunctionSpec {
        name: "move_screen",
        spatial: true,
    },
    FunctionSpec {
        name: "attack_screen",
        spatial: true,
    },
    FunctionSpec {
        name: "move_camera",
        spatial: true,
    },
];

/// The function table, in id order. Shared by all minigames.
pub fn registry() -> &'static [FunctionSpec] {
    &REGISTRY
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_entries() {
        let r = registry();
        assert_eq!(r.len(), 7);
        assert_eq!(
            r[0],
            FunctionSpec {
                name: "no_op",
                spatial: false
            }
        );
        assert_eq!(
            r[4],
            FunctionSpec {
                name: "move_screen",
                spatial: true
            }
        );
        for (i, f) in FunctionId::ALL.iter().enumerate() {
            assert_eq!(*f as usize, i);
            assert_eq!(FunctionId::from_index(i), Some(*f));
        }
        assert_eq!(FunctionId::from_index(7), None);
    }
}
