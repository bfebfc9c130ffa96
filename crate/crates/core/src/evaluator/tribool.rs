use crate::model::token_enum;

token_enum! {
    /// Kleene strong three-valued truth. Variants are declared in the order
    /// False < Undetermined < True so that `and` is `min` and `or` is `max`.
    pub enum TriBool: "truth value" {
        False => "false",
        Undetermined => "undetermined",
        True => "true",
    }
}

impl TriBool {
    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> TriBool {
        match self {
            TriBool::True => TriBool::False,
            TriBool::False => TriBool::True,
            TriBool::Undetermined => TriBool::Undetermined,
        }
    }

    pub fn and(self, other: TriBool) -> TriBool {
        self.min(other)
    }

    pub fn or(self, other: TriBool) -> TriBool {
        self.max(other)
    }

    pub fn is_true(self) -> bool {
        self == TriBool::True
    }

    pub fn as_bool(self) -> Option<bool> {
        match self {
            TriBool::True => Some(true),
            TriBool::False => Some(false),
            TriBool::Undetermined => None,
        }
    }
}

impl From<bool> for TriBool {
    fn from(b: bool) -> Self {
        if b {
            TriBool::True
        } else {
            TriBool::False
        }
    }
}
