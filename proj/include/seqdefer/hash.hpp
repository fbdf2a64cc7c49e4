/*
 * Copyright 2026 The seqdefer Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SEQDEFER_HASH_HPP_
#define SEQDEFER_HASH_HPP_

#include <string>
#include <string_view>

namespace seqdefer {

// Lowercase hex SHA-1 digest.
std::string Sha1Hex(std::string_view data);

// Same digest `git hash-object` reports for a blob with this content.
std::string GitBlobHash(std::string_view content);

}  // namespace seqdefer

#endif  // SEQDEFER_HASH_HPP_
