/// Gulf Cooperation Council member states.
pub const GCC: [&str; 6] = ["BHR", "KWT", "OMN", "QAT", "SAU", "ARE"];

/// Main labor-origin countries for GCC temporary workers.
pub const GCC_LABOR_ORIGIN: [&str; 5] = ["BGD", "IND", "IDN", "PHL", "PAK"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CountryGroup {
    Gcc,
    GccLaborOrigin,
    Other,
}

impl CountryGroup {
    pub fn for_iso3(iso3: &str) -> Self {
        if GCC.contains(&iso3) {
            CountryGroup::Gcc
        } else if GCC_LABOR_ORIGIN.contains(&iso3) {
            CountryGroup::GccLaborOrigin
        } else {
            CountryGroup::Other
        }
    }

    /// Index of the rebalancing partition: GCC and its labor origins share one
    /// group, everyone else forms the other.
    pub fn rebalance_partition(self) -> usize {
        match self {
            CountryGroup::Gcc | CountryGroup::GccLaborOrigin => 0,
            CountryGroup::Other => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CountryGroup::Gcc => "GCC",
            CountryGroup::GccLaborOrigin => "GCC_LABOR_ORIGIN",
            CountryGroup::Other => "OTHER",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "GCC" => Some(CountryGroup::Gcc),
            "GCC_LABOR_ORIGIN" => Some(CountryGroup::GccLaborOrigin),
            "OTHER" => Some(CountryGroup::Other),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountryMeta {
    pub iso3: String,
    pub region: String,
    pub group: CountryGroup,
}

impl CountryMeta {
    pub fn new(iso3: impl Into<String>, region: impl Into<String>) -> Self {
        let iso3 = iso3.into();
        let group = CountryGroup::for_iso3(&iso3);
        Self {
            iso3,
            region: region.into(),
            group,
        }
    }

    pub fn with_group(mut self, group: CountryGroup) -> Self {
        self.group = group;
        self
    }

    pub fn is_gcc(&self) -> bool {
        self.group == CountryGroup::Gcc
    }
}
