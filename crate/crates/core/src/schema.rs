//! Relational schema and database instances.
//!
//! A schema is a list of tables with typed fields, key flags and foreign-key
//! references. Tables with exactly one key field are entity tables; every
//! other table is a relationship table. Entity identity across tables is
//! expressed only through declared `references`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value::{Tuple, Value, ValueType};

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("schema document is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("duplicate table name `{0}`")]
    DuplicateTable(String),
    #[error("duplicate field `{field}` in table `{table}`")]
    DuplicateField { table: String, field: String },
    #[error("table `{0}` has no fields")]
    NoFields(String),
    #[error("table `{0}` has no key field")]
    NoKey(String),
    #[error(
        "entity table `{table}` has {keys} key fields; entity tables need a single key field \
         (pre-compose the key columns into one composite key field)"
    )]
    CompositeEntityKey { table: String, keys: usize },
    #[error("table `{0}` has a single key field and is therefore an entity table")]
    NotARelationship(String),
    #[error("field `{table}.{field}`: malformed reference `{target}` (expected `Table.Field`)")]
    MalformedReference {
        table: String,
        field: String,
        target: String,
    },
    #[error("field `{table}.{field}` references unknown field `{target}`")]
    DanglingReference {
        table: String,
        field: String,
        target: String,
    },
    #[error("field `{table}.{field}` references `{target}`, which is not the key of an entity table")]
    ReferenceNotEntityKey {
        table: String,
        field: String,
        target: String,
    },
    #[error("field `{table}.{field}` has type {found} but references `{target}` of type {expected}")]
    ReferenceTypeMismatch {
        table: String,
        field: String,
        target: String,
        expected: ValueType,
        found: ValueType,
    },
}

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("no table `{0}` in the schema")]
    UnknownTable(String),
    #[error("no rows supplied for table `{0}`")]
    MissingTable(String),
    #[error("table `{table}` row {row}: expected {expected} values, found {found}")]
    Arity {
        table: String,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("table `{table}` row {row}: field `{field}` expects {expected}, found {found}")]
    Type {
        table: String,
        row: usize,
        field: String,
        expected: ValueType,
        found: String,
    },
    #[error("table `{table}`: duplicate key {key}")]
    DuplicateKey { table: String, key: String },
    #[error("table `{table}`: value {value} in `{field}` does not appear in `{target}`")]
    ReferentialIntegrity {
        table: String,
        field: String,
        value: String,
        target: String,
    },
    #[error("table `{table}`: header {found:?} does not match fields {expected:?}")]
    Header {
        table: String,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("table `{table}`: {source}")]
    Csv {
        table: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A field reference `Table.Field`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QualifiedField {
    pub table: String,
    pub field: String,
}

impl QualifiedField {
    pub fn new(table: impl Into<String>, field: impl Into<String>) -> Self {
        QualifiedField {
            table: table.into(),
            field: field.into(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let (table, field) = s.split_once('.')?;
        if table.is_empty() || field.is_empty() {
            return None;
        }
        Some(QualifiedField::new(table, field))
    }
}

impl fmt::Display for QualifiedField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.field)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldDecl {
    pub name: String,
    pub value_type: ValueType,
    pub is_key: bool,
    pub references: Option<QualifiedField>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableDecl {
    pub name: String,
    pub fields: Vec<FieldDecl>,
}

impl TableDecl {
    pub fn arity(&self) -> usize {
        self.fields.len()
    }

    pub fn key_positions(&self) -> Vec<usize> {
        self.fields
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_key)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_entity_table(&self) -> bool {
        self.fields.iter().filter(|f| f.is_key).count() == 1
    }

    pub fn field_position(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }
}

// On-disk layout of the schema document.
#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct SchemaDoc {
    tables: Vec<TableDoc>,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct TableDoc {
    name: String,
    fields: Vec<FieldDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    entity: Option<bool>,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct FieldDoc {
    name: String,
    #[serde(rename = "type")]
    value_type: ValueType,
    #[serde(default)]
    key: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    references: Option<String>,
}

/// A validated relational schema.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schema {
    tables: Vec<TableDecl>,
    index: HashMap<String, usize>,
    // entity_field[t][i]: field i of table t holds entity constants.
    entity_field: Vec<Vec<bool>>,
}

impl Schema {
    /// Validate a list of table declarations.
    ///
    /// `declared_entity` optionally asserts, per table, whether the table is
    /// meant as an entity table; a declared entity table with a composite key
    /// is rejected.
    pub fn new(
        tables: Vec<TableDecl>,
        declared_entity: &HashMap<String, bool>,
    ) -> Result<Schema, SchemaError> {
        let mut index = HashMap::new();
        for (i, t) in tables.iter().enumerate() {
            if index.insert(t.name.clone(), i).is_some() {
                return Err(SchemaError::DuplicateTable(t.name.clone()));
            }
            if t.fields.is_empty() {
                return Err(SchemaError::NoFields(t.name.clone()));
            }
            let mut seen = BTreeSet::new();
            for f in &t.fields {
                if !seen.insert(f.name.as_str()) {
                    return Err(SchemaError::DuplicateField {
                        table: t.name.clone(),
                        field: f.name.clone(),
                    });
                }
            }
            let keys = t.key_positions().len();
            if keys == 0 {
                return Err(SchemaError::NoKey(t.name.clone()));
            }
            match declared_entity.get(&t.name) {
                Some(true) if keys != 1 => {
                    return Err(SchemaError::CompositeEntityKey {
                        table: t.name.clone(),
                        keys,
                    })
                }
                Some(false) if keys == 1 => {
                    return Err(SchemaError::NotARelationship(t.name.clone()))
                }
                _ => {}
            }
        }

        for t in &tables {
            for f in &t.fields {
                let Some(target) = &f.references else { continue };
                let target_table = index
                    .get(&target.table)
                    .map(|&i| &tables[i])
                    .ok_or_else(|| SchemaError::DanglingReference {
                        table: t.name.clone(),
                        field: f.name.clone(),
                        target: target.to_string(),
                    })?;
                let target_field = target_table
                    .fields
                    .iter()
                    .find(|tf| tf.name == target.field)
                    .ok_or_else(|| SchemaError::DanglingReference {
                        table: t.name.clone(),
                        field: f.name.clone(),
                        target: target.to_string(),
                    })?;
                if !target_field.is_key || !target_table.is_entity_table() {
                    return Err(SchemaError::ReferenceNotEntityKey {
                        table: t.name.clone(),
                        field: f.name.clone(),
                        target: target.to_string(),
                    });
                }
                if target_field.value_type != f.value_type {
                    return Err(SchemaError::ReferenceTypeMismatch {
                        table: t.name.clone(),
                        field: f.name.clone(),
                        target: target.to_string(),
                        expected: target_field.value_type,
                        found: f.value_type,
                    });
                }
            }
        }

        let entity_field = tables
            .iter()
            .map(|t| {
                let entity = t.is_entity_table();
                t.fields
                    .iter()
                    .map(|f| (entity && f.is_key) || f.references.is_some())
                    .collect()
            })
            .collect();

        Ok(Schema {
            tables,
            index,
            entity_field,
        })
    }

    pub fn tables(&self) -> &[TableDecl] {
        &self.tables
    }

    pub fn table(&self, name: &str) -> Option<&TableDecl> {
        self.index.get(name).map(|&i| &self.tables[i])
    }

    pub fn entity_tables(&self) -> impl Iterator<Item = &TableDecl> {
        self.tables.iter().filter(|t| t.is_entity_table())
    }

    pub fn relationship_tables(&self) -> impl Iterator<Item = &TableDecl> {
        self.tables.iter().filter(|t| !t.is_entity_table())
    }

    /// Whether argument `position` of predicate `table` is an entity field.
    pub fn is_entity_position(&self, table: &str, position: usize) -> bool {
        self.index
            .get(table)
            .and_then(|&t| self.entity_field[t].get(position).copied())
            .unwrap_or(false)
    }

    /// Keys of entity tables plus fields referencing such keys.
    pub fn entity_fields(&self) -> BTreeSet<QualifiedField> {
        let mut out = BTreeSet::new();
        for (t, flags) in self.tables.iter().zip(&self.entity_field) {
            for (f, &is_entity) in t.fields.iter().zip(flags) {
                if is_entity {
                    out.insert(QualifiedField::new(&t.name, &f.name));
                }
            }
        }
        out
    }

    /// Render back to the schema document format.
    pub fn to_json(&self) -> String {
        let doc = SchemaDoc {
            tables: self
                .tables
                .iter()
                .map(|t| TableDoc {
                    name: t.name.clone(),
                    entity: None,
                    fields: t
                        .fields
                        .iter()
                        .map(|f| FieldDoc {
                            name: f.name.clone(),
                            value_type: f.value_type,
                            key: f.is_key,
                            references: f.references.as_ref().map(|r| r.to_string()),
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("schema serializes")
    }
}

/// Parse and validate a schema document.
pub fn load_schema(doc: &str) -> Result<Schema, SchemaError> {
    let doc: SchemaDoc = serde_json::from_str(doc)?;
    let mut declared = HashMap::new();
    let mut tables = Vec::with_capacity(doc.tables.len());
    for t in doc.tables {
        if let Some(flag) = t.entity {
            declared.insert(t.name.clone(), flag);
        }
        let mut fields = Vec::with_capacity(t.fields.len());
        for f in t.fields {
            let references = match f.references {
                None => None,
                Some(r) => Some(QualifiedField::parse(&r).ok_or_else(|| {
                    SchemaError::MalformedReference {
                        table: t.name.clone(),
                        field: f.name.clone(),
                        target: r.clone(),
                    }
                })?),
            };
            fields.push(FieldDecl {
                name: f.name,
                value_type: f.value_type,
                is_key: f.key,
                references,
            });
        }
        tables.push(TableDecl {
            name: t.name,
            fields,
        });
    }
    Schema::new(tables, &declared)
}

/// An immutable, validated database instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatabaseInstance {
    schema: Schema,
    relations: BTreeMap<String, BTreeSet<Tuple>>,
    entity_constants: BTreeSet<Value>,
    active_domain: BTreeSet<Value>,
}

/// Build an instance from typed rows, checking arity, types, key uniqueness
/// and referential integrity.
pub fn load_instance(
    schema: &Schema,
    mut tables: BTreeMap<String, Vec<Tuple>>,
) -> Result<DatabaseInstance, InstanceError> {
    if let Some(name) = tables.keys().find(|n| schema.table(n).is_none()) {
        return Err(InstanceError::UnknownTable(name.clone()));
    }
    let mut relations = BTreeMap::new();
    for t in schema.tables() {
        let rows = tables
            .remove(&t.name)
            .ok_or_else(|| InstanceError::MissingTable(t.name.clone()))?;
        let keys = t.key_positions();
        let mut seen_keys = BTreeSet::new();
        let mut set = BTreeSet::new();
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != t.arity() {
                return Err(InstanceError::Arity {
                    table: t.name.clone(),
                    row: r + 1,
                    expected: t.arity(),
                    found: row.len(),
                });
            }
            for (v, f) in row.iter().zip(&t.fields) {
                if v.value_type() != f.value_type {
                    return Err(InstanceError::Type {
                        table: t.name.clone(),
                        row: r + 1,
                        field: f.name.clone(),
                        expected: f.value_type,
                        found: v.to_string(),
                    });
                }
            }
            let key: Vec<Value> = keys.iter().map(|&k| row[k].clone()).collect();
            if !seen_keys.insert(key.clone()) {
                let shown: Vec<String> = key.iter().map(|v| v.to_string()).collect();
                return Err(InstanceError::DuplicateKey {
                    table: t.name.clone(),
                    key: format!("({})", shown.join(", ")),
                });
            }
            set.insert(row);
        }
        relations.insert(t.name.clone(), set);
    }

    for t in schema.tables() {
        for (i, f) in t.fields.iter().enumerate() {
            let Some(target) = &f.references else { continue };
            let target_table = schema.table(&target.table).expect("validated schema");
            let pos = target_table
                .field_position(&target.field)
                .expect("validated schema");
            let column: BTreeSet<&Value> =
                relations[&target.table].iter().map(|row| &row[pos]).collect();
            for row in &relations[&t.name] {
                if !column.contains(&row[i]) {
                    return Err(InstanceError::ReferentialIntegrity {
                        table: t.name.clone(),
                        field: f.name.clone(),
                        value: row[i].to_string(),
                        target: target.to_string(),
                    });
                }
            }
        }
    }

    let mut entity_constants = BTreeSet::new();
    let mut active_domain = BTreeSet::new();
    for t in schema.tables() {
        for row in &relations[&t.name] {
            for (i, v) in row.iter().enumerate() {
                if schema.is_entity_position(&t.name, i) {
                    entity_constants.insert(v.clone());
                }
                active_domain.insert(v.clone());
            }
        }
    }

    Ok(DatabaseInstance {
        schema: schema.clone(),
        relations,
        entity_constants,
        active_domain,
    })
}

/// Load one `<Table>.csv` per schema table from `dir`.
pub fn load_instance_dir(schema: &Schema, dir: &Path) -> Result<DatabaseInstance, InstanceError> {
    let mut tables = BTreeMap::new();
    for t in schema.tables() {
        let path = dir.join(format!("{}.csv", t.name));
        let text = fs::read_to_string(&path).map_err(|source| InstanceError::Io {
            path: path.clone(),
            source,
        })?;
        tables.insert(t.name.clone(), read_csv_rows(t, &text)?);
    }
    load_instance(schema, tables)
}

/// Parse CSV text for one table: header row, then typed values.
pub fn read_csv_rows(table: &TableDecl, text: &str) -> Result<Vec<Tuple>, InstanceError> {
    let csv_err = |source| InstanceError::Csv {
        table: table.name.clone(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    let expected: Vec<String> = table.fields.iter().map(|f| f.name.clone()).collect();
    if header != expected {
        return Err(InstanceError::Header {
            table: table.name.clone(),
            expected,
            found: header,
        });
    }
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        if record.len() != table.arity() {
            return Err(InstanceError::Arity {
                table: table.name.clone(),
                row: r + 1,
                expected: table.arity(),
                found: record.len(),
            });
        }
        let mut row = Vec::with_capacity(record.len());
        for (cell, f) in record.iter().zip(&table.fields) {
            let v = Value::parse_as(cell, f.value_type).ok_or_else(|| InstanceError::Type {
                table: table.name.clone(),
                row: r + 1,
                field: f.name.clone(),
                expected: f.value_type,
                found: format!("{:?}", cell),
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    Ok(rows)
}

impl DatabaseInstance {
    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    /// Tuples of a table, or `None` if the table is unknown.
    pub fn relation(&self, table: &str) -> Option<&BTreeSet<Tuple>> {
        self.relations.get(table)
    }

    pub fn contains(&self, table: &str, tuple: &[Value]) -> bool {
        self.relations
            .get(table)
            .is_some_and(|rows| rows.contains(tuple))
    }

    pub fn entity_constants(&self) -> &BTreeSet<Value> {
        &self.entity_constants
    }

    pub fn active_domain(&self) -> &BTreeSet<Value> {
        &self.active_domain
    }

    pub fn is_entity_constant(&self, c: &Value) -> bool {
        self.entity_constants.contains(c)
    }

    pub fn has_empty_table(&self) -> bool {
        self.relations.values().any(BTreeSet::is_empty)
    }

    /// Rows per table, suitable for feeding back into [`load_instance`].
    pub fn to_rows(&self) -> BTreeMap<String, Vec<Tuple>> {
        self.relations
            .iter()
            .map(|(name, rows)| (name.clone(), rows.iter().cloned().collect()))
            .collect()
    }

    /// Write one `<Table>.csv` per table into `dir`.
    pub fn write_csv_dir(&self, dir: &Path) -> Result<(), InstanceError> {
        for t in self.schema.tables() {
            let path = dir.join(format!("{}.csv", t.name));
            let mut w = csv::Writer::from_path(&path).map_err(|source| InstanceError::Csv {
                table: t.name.clone(),
                source,
            })?;
            let csv_err = |source| InstanceError::Csv {
                table: t.name.clone(),
                source,
            };
            w.write_record(t.fields.iter().map(|f| f.name.as_str()))
                .map_err(csv_err)?;
            for row in &self.relations[&t.name] {
                w.write_record(row.iter().map(Value::to_plain))
                    .map_err(csv_err)?;
            }
            w.flush().map_err(|source| InstanceError::Io { path, source })?;
        }
        Ok(())
    }
}
