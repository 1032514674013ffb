use super::ContainerError;

/// Element type of an [`ArrayRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    F32,
    F64,
    I32,
    I64,
    U8,
    Bool,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 | DType::I32 => 4,
            DType::F64 | DType::I64 => 8,
            DType::U8 | DType::Bool => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::F64 => "f64",
            DType::I32 => "i32",
            DType::I64 => "i64",
            DType::U8 => "u8",
            DType::Bool => "bool",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    I32(Vec<i32>),
    I64(Vec<i64>),
    U8(Vec<u8>),
    Bool(Vec<bool>),
}

impl ArrayData {
    pub fn len(&self) -> usize {
        match self {
            ArrayData::F32(v) => v.len(),
            ArrayData::F64(v) => v.len(),
            ArrayData::I32(v) => v.len(),
            ArrayData::I64(v) => v.len(),
            ArrayData::U8(v) => v.len(),
            ArrayData::Bool(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            ArrayData::F32(_) => DType::F32,
            ArrayData::F64(_) => DType::F64,
            ArrayData::I32(_) => DType::I32,
            ArrayData::I64(_) => DType::I64,
            ArrayData::U8(_) => DType::U8,
            ArrayData::Bool(_) => DType::Bool,
        }
    }
}

/// An n-dimensional row-major array with a typed payload.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayRecord {
    shape: Vec<usize>,
    data: ArrayData,
}

impl ArrayRecord {
    pub fn new(shape: Vec<usize>, data: ArrayData) -> Result<Self, ContainerError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(ContainerError::ShapeMismatch {
                shape,
                elements: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn from_f64(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, ContainerError> {
        Self::new(shape, ArrayData::F64(values))
    }

    /// A 0-d array holding one `f64`.
    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: ArrayData::F64(vec![value]),
        }
    }

    /// A 1-d `u8` array holding UTF-8 text.
    pub fn text(value: &str) -> Self {
        let bytes = value.as_bytes().to_vec();
        Self {
            shape: vec![bytes.len()],
            data: ArrayData::U8(bytes),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &ArrayData {
        &self.data
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn byte_len(&self) -> usize {
        self.len() * self.dtype().size()
    }

    /// Values widened to `f64`. Booleans map to 0/1.
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            ArrayData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            ArrayData::F64(v) => v.clone(),
            ArrayData::I32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            ArrayData::I64(v) => v.iter().map(|&x| x as f64).collect(),
            ArrayData::U8(v) => v.iter().map(|&x| f64::from(x)).collect(),
            ArrayData::Bool(v) => v.iter().map(|&x| if x { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// Interprets a `u8` array as UTF-8 text.
    pub fn as_text(&self) -> Option<&str> {
        match &self.data {
            ArrayData::U8(v) if self.shape.len() == 1 => std::str::from_utf8(v).ok(),
            _ => None,
        }
    }
}
