// Internal BST delete, two-child case with the successor immediately
// at curr->right->left.  The synthesized block promotes the successor
// into curr's place one field at a time.
#include "tree.h"

bool delete_key(int key){
    while(true){
        @@begin-traversal
        struct node * parent = root;
        struct node * curr = root;
        while(curr != NULL && curr->key != key){
            parent = curr;
            if(key < curr->key)
                curr = curr->left;
            else
                curr = curr->right;
        }
        @@end-traversal
        if(curr == NULL)
            return false;
        if(parent->left == curr && curr->left != NULL && curr->right != NULL){
            @@delete::block1
            return true;
        }
        return false;
    }
}
